#include "touchsdf/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "touchsdf/binary_io.hpp"

namespace touchsdf::ad {

void write_parameters(std::ostream& out, const ParameterSet<float>& params) {
  io::write_magic(out, "TPRM");
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    io::write_string(out, name);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) io::write_pod<std::uint64_t>(out, d);
    for (float v : t.data) io::write_pod<float>(out, v);
  }
}

ParameterSet<float> read_parameters(std::istream& in) {
  io::expect_magic(in, "TPRM");
  if (const auto v = io::read_pod<std::uint32_t>(in); v != 1) {
    throw ParseError("unsupported TPRM version " + std::to_string(v));
  }
  const auto count = io::read_pod<std::uint32_t>(in);
  ParameterSet<float> params;
  for (std::uint32_t k = 0; k < count; ++k) {
    auto name = io::read_string(in);
    const auto rank = io::read_pod<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = io::read_pod<std::uint64_t>(in);
    Tensor<float> t(shape);
    for (auto& v : t.data) v = io::read_pod<float>(in);
    params.add(name, std::move(t));
  }
  return params;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_parameters(out, params);
}

ParameterSet<float> load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_parameters(in);
}

}  // namespace touchsdf::ad

namespace touchsdf {

void save_sidecar(const std::filesystem::path& path, const Sidecar& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

Sidecar load_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Sidecar values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("sidecar line without '=': " + line);
    values[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return values;
}

const std::string& sidecar_get(const Sidecar& values, const std::string& key) {
  auto it = values.find(key);
  if (it == values.end()) throw ParseError("sidecar is missing key " + key);
  return it->second;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace touchsdf
