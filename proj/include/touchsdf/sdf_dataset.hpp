#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "touchsdf/geometry.hpp"
#include "touchsdf/mesh_query.hpp"

namespace touchsdf {

// Half-width of the cube uniform samples are drawn from.
inline constexpr double kSampleVolumeHalfWidth = 1.1;

// Each surface sample yields two perturbed points: one with std sigma_near
// and one with std sigma_near / sqrt(10). Then n_uniform points uniform in
// [-1.1, 1.1]^3. Order: near pairs first, uniform points last.
std::vector<SdfSample> generate_sdf_dataset(const MeshQuery& query, std::size_t n_surface,
                                            std::size_t n_uniform, double sigma_near, std::uint64_t seed);
std::vector<SdfSample> generate_sdf_dataset(const TriangleMesh& mesh, std::size_t n_surface,
                                            std::size_t n_uniform, double sigma_near, std::uint64_t seed);

// "TSDF" v1: u64 count then count x (x, y, z, s) float32.
void write_sdf_dataset(std::ostream& out, const std::vector<SdfSample>& samples);
std::vector<SdfSample> read_sdf_dataset(std::istream& in);
void save_sdf_dataset(const std::filesystem::path& path, const std::vector<SdfSample>& samples);
std::vector<SdfSample> load_sdf_dataset(const std::filesystem::path& path);

}  // namespace touchsdf
