#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "touchsdf/autodiff.hpp"

namespace touchsdf::ad {

// "TPRM" v1: u32 tensor count; per tensor a length-prefixed UTF-8 name,
// u32 rank, u64 dims, float32 data.
void write_parameters(std::ostream& out, const ParameterSet<float>& params);
ParameterSet<float> read_parameters(std::istream& in);
void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params);
ParameterSet<float> load_parameters(const std::filesystem::path& path);

}  // namespace touchsdf::ad

namespace touchsdf {

// Plain-text `key=value` sidecar stored next to a parameter checkpoint.
using Sidecar = std::map<std::string, std::string>;

void save_sidecar(const std::filesystem::path& path, const Sidecar& values);
Sidecar load_sidecar(const std::filesystem::path& path);
const std::string& sidecar_get(const Sidecar& values, const std::string& key);
// Round-trippable text form of a double (%.17g).
std::string format_double(double v);

}  // namespace touchsdf
