#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "touchsdf/geometry.hpp"
#include "touchsdf/mesh_query.hpp"

namespace touchsdf::touch {

// Radius of the sphere touch origins are drawn from, in normalized units.
inline constexpr double kApproachRadius = 1.3;

struct SensorSpec {
  double footprint_radius = 0.15;
  std::uint32_t image_size = 64;
  double max_press_depth = 0.04;
  double intensity_threshold = 1.0;  // on the 0..255 scale
  double step = 0.005;

  double pixel_pitch() const { return 2.0 * footprint_radius / image_size; }
  void validate() const;  // throws InvalidArgument
};

// Depth map in [0, 1] (0 = no contact, 1 = max_press_depth indentation),
// row-major, row index along sensor +y and column index along sensor +x.
struct TactileImage {
  std::uint32_t size = 0;
  std::vector<float> depth;
  Pose pose;  // pose the image was rendered at

  float at(std::uint32_t row, std::uint32_t col) const { return depth[row * size + col]; }
  double mean() const;
  double mean_intensity() const { return 255.0 * mean(); }
};

struct TouchRecord {
  TactileImage image;
  Pose pose;  // sensor frame -> world; z axis points back along the approach
  PointCloud local_cloud;  // world frame, with outward normals
  std::uint64_t shape_id = 0;
};

struct TouchRay {
  Vec3 origin = Vec3::Zero();
  UnitVec3 dir{Vec3(0.0, 0.0, -1.0)};
};

// Pixel center of (row, col) in the sensor plane (z = 0 of the sensor frame).
Eigen::Vector2d pixel_center(const SensorSpec& spec, std::uint32_t row, std::uint32_t col);
// Pixels outside the inscribed disk of the footprint square are never in contact.
bool pixel_in_pad(const SensorSpec& spec, std::uint32_t row, std::uint32_t col);

// Sensor frame for a plane centred at `center` approaching along `dir`:
// z = -dir, x = world-x projected onto the plane (world-y when degenerate).
Pose sensor_pose(const Vec3& center, const UnitVec3& dir);

// Origin uniform on the approach sphere around the bounding-box centre, aimed
// at the centre.
TouchRay sample_touch_ray(const MeshQuery& mesh, std::uint64_t seed);
TouchRay sample_touch_ray(const TriangleMesh& mesh, std::uint64_t seed);

// Orthographic depth render along the sensor -z axis over the footprint.
TactileImage render_depth(const MeshQuery& mesh, const Pose& pose, const SensorSpec& spec);

// Advances the sensor plane along the ray in `spec.step` increments until the
// mean image intensity exceeds the threshold. Returns nullopt for no contact.
std::optional<TouchRecord> press(const MeshQuery& mesh, const TouchRay& ray, const SensorSpec& spec,
                                 std::uint64_t shape_id = 0, std::size_t cloud_points = 256,
                                 std::uint64_t cloud_seed = 0);

// Area-weighted samples of the contact surface: mesh triangles clipped to the
// footprint prism between the sensor plane and max_press_depth above it,
// restricted to the circular pad and to surface visible from the sensor.
// Throws NoContact when nothing of the mesh is in contact.
PointCloud extract_local_cloud(const MeshQuery& mesh, const Pose& pose, const SensorSpec& spec,
                               std::size_t n, std::uint64_t seed);

// Back-projects pixels with 0 < depth < 1 to sensor-frame heights and then to
// the world frame.
std::vector<Vec3> back_project(const TactileImage& image, const SensorSpec& spec);

// "TTCH" archive.
void write_archive(std::ostream& out, const std::vector<TouchRecord>& records);
std::vector<TouchRecord> read_archive(std::istream& in);
void save_archive(const std::filesystem::path& path, const std::vector<TouchRecord>& records);
std::vector<TouchRecord> load_archive(const std::filesystem::path& path);

// 8-bit binary PGM, values round(255 * depth).
void write_pgm(std::ostream& out, const TactileImage& image);
void save_pgm(const std::filesystem::path& path, const TactileImage& image);

}  // namespace touchsdf::touch
