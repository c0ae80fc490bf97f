#pragma once

#include <stdexcept>
#include <string>

namespace touchsdf {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TOUCHSDF_DEFINE_ERROR(Name)            \
  class Name : public Error {                  \
   public:                                     \
    explicit Name(const std::string& what)     \
        : Error(std::string(#Name ": ") + what) {} \
  }

TOUCHSDF_DEFINE_ERROR(ParseError);
TOUCHSDF_DEFINE_ERROR(IoError);
TOUCHSDF_DEFINE_ERROR(NonManifold);
TOUCHSDF_DEFINE_ERROR(NonWatertight);
TOUCHSDF_DEFINE_ERROR(DegenerateMesh);
TOUCHSDF_DEFINE_ERROR(NoContact);
TOUCHSDF_DEFINE_ERROR(ShapeMismatch);
TOUCHSDF_DEFINE_ERROR(NotScalar);
TOUCHSDF_DEFINE_ERROR(EmptyDataset);
TOUCHSDF_DEFINE_ERROR(EmptyObservation);
TOUCHSDF_DEFINE_ERROR(MixedShapes);
TOUCHSDF_DEFINE_ERROR(EmptyCloud);
TOUCHSDF_DEFINE_ERROR(SizeMismatch);
TOUCHSDF_DEFINE_ERROR(ZeroGtArea);
TOUCHSDF_DEFINE_ERROR(TessellationFailure);
TOUCHSDF_DEFINE_ERROR(RetriesExhausted);
TOUCHSDF_DEFINE_ERROR(ConfigError);
TOUCHSDF_DEFINE_ERROR(InvalidArgument);

#undef TOUCHSDF_DEFINE_ERROR

}  // namespace touchsdf
