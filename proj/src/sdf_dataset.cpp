#include "touchsdf/sdf_dataset.hpp"

#include <cmath>
#include <fstream>

#include "touchsdf/binary_io.hpp"
#include "touchsdf/rng.hpp"

namespace touchsdf {

std::vector<SdfSample> generate_sdf_dataset(const MeshQuery& query, std::size_t n_surface,
                                            std::size_t n_uniform, double sigma_near, std::uint64_t seed) {
  if (!query.watertight()) throw NonWatertight("SDF dataset needs a closed mesh");
  if (sigma_near < 0.0) throw InvalidArgument("sigma_near must be >= 0");

  std::vector<SdfSample> out;
  out.reserve(2 * n_surface + n_uniform);
  if (n_surface > 0) {
    const PointCloud surface = sample_surface(query.mesh(), n_surface, mix_seed(seed, 1));
    Rng noise(seed, 2);
    const double sigmas[2] = {sigma_near, sigma_near / std::sqrt(10.0)};
    for (const auto& p : surface.points) {
      for (double sigma : sigmas) {
        const Vec3 q = p + sigma * Vec3(noise.normal(), noise.normal(), noise.normal());
        // zero noise keeps the exact surface point and its exact zero label
        out.push_back(sigma == 0.0 ? SdfSample{q, 0.0} : query.signed_distance(q));
      }
    }
  }
  Rng uniform(seed, 3);
  for (std::size_t i = 0; i < n_uniform; ++i) {
    const Vec3 q(uniform.uniform(-kSampleVolumeHalfWidth, kSampleVolumeHalfWidth),
                 uniform.uniform(-kSampleVolumeHalfWidth, kSampleVolumeHalfWidth),
                 uniform.uniform(-kSampleVolumeHalfWidth, kSampleVolumeHalfWidth));
    out.push_back(query.signed_distance(q));
  }
  return out;
}

std::vector<SdfSample> generate_sdf_dataset(const TriangleMesh& mesh, std::size_t n_surface,
                                            std::size_t n_uniform, double sigma_near, std::uint64_t seed) {
  if (!is_watertight(mesh)) throw NonWatertight("SDF dataset needs a closed mesh");
  return generate_sdf_dataset(MeshQuery(mesh), n_surface, n_uniform, sigma_near, seed);
}

void write_sdf_dataset(std::ostream& out, const std::vector<SdfSample>& samples) {
  io::write_magic(out, "TSDF");
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint64_t>(out, samples.size());
  for (const auto& s : samples) {
    io::write_pod(out, static_cast<float>(s.x.x()));
    io::write_pod(out, static_cast<float>(s.x.y()));
    io::write_pod(out, static_cast<float>(s.x.z()));
    io::write_pod(out, static_cast<float>(s.s));
  }
}

std::vector<SdfSample> read_sdf_dataset(std::istream& in) {
  io::expect_magic(in, "TSDF");
  if (const auto v = io::read_pod<std::uint32_t>(in); v != 1) {
    throw ParseError("unsupported TSDF version " + std::to_string(v));
  }
  const auto count = io::read_pod<std::uint64_t>(in);
  std::vector<SdfSample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SdfSample s;
    s.x.x() = io::read_pod<float>(in);
    s.x.y() = io::read_pod<float>(in);
    s.x.z() = io::read_pod<float>(in);
    s.s = io::read_pod<float>(in);
    out.push_back(s);
  }
  return out;
}

void save_sdf_dataset(const std::filesystem::path& path, const std::vector<SdfSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_sdf_dataset(out, samples);
}

std::vector<SdfSample> load_sdf_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_sdf_dataset(in);
}

}  // namespace touchsdf
