#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "touchsdf/errors.hpp"

namespace touchsdf::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

template <typename T>
void write_pod(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw ParseError("unexpected end of binary stream");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void write_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), 4); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  char got[4];
  if (!in.read(got, 4) || std::string_view(got, 4) != magic) {
    throw ParseError("bad magic, expected '" + std::string(magic) + "'");
  }
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw ParseError("truncated string");
  return s;
}

}  // namespace touchsdf::io
