#include "touchsdf/touch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "touchsdf/binary_io.hpp"
#include "touchsdf/rng.hpp"

namespace touchsdf::touch {

void SensorSpec::validate() const {
  if (image_size < 8) throw InvalidArgument("image_size must be >= 8");
  if (!(footprint_radius > 0.0)) throw InvalidArgument("footprint_radius must be > 0");
  if (!(step > 0.0)) throw InvalidArgument("step must be > 0");
  if (!(max_press_depth > 0.0)) throw InvalidArgument("max_press_depth must be > 0");
  if (intensity_threshold < 0.0 || intensity_threshold > 255.0) {
    throw InvalidArgument("intensity_threshold must lie in [0, 255]");
  }
}

double TactileImage::mean() const {
  double total = 0.0;
  for (float v : depth) total += v;
  return depth.empty() ? 0.0 : total / static_cast<double>(depth.size());
}

Eigen::Vector2d pixel_center(const SensorSpec& spec, std::uint32_t row, std::uint32_t col) {
  const double pitch = spec.pixel_pitch();
  return {-spec.footprint_radius + (col + 0.5) * pitch, -spec.footprint_radius + (row + 0.5) * pitch};
}

bool pixel_in_pad(const SensorSpec& spec, std::uint32_t row, std::uint32_t col) {
  return pixel_center(spec, row, col).squaredNorm() <= spec.footprint_radius * spec.footprint_radius;
}

Pose sensor_pose(const Vec3& center, const UnitVec3& dir) {
  const Vec3 z = -dir.vec();
  Vec3 x = Vec3::UnitX() - Vec3::UnitX().dot(z) * z;
  if (x.norm() < 1e-6) x = Vec3::UnitY() - Vec3::UnitY().dot(z) * z;
  x.normalize();
  const Vec3 y = z.cross(x);
  Pose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = center;
  return pose;
}

TouchRay sample_touch_ray(const MeshQuery& mesh, std::uint64_t seed) {
  const Vec3 center = mesh.box().center();
  Rng rng(seed, 0x70756368);
  Vec3 d;
  do {
    d = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (d.norm() < 1e-12);
  const UnitVec3 outward(d);
  return {center + kApproachRadius * outward.vec(), -outward};
}

TouchRay sample_touch_ray(const TriangleMesh& mesh, std::uint64_t seed) {
  return sample_touch_ray(MeshQuery(mesh), seed);
}

TactileImage render_depth(const MeshQuery& mesh, const Pose& pose, const SensorSpec& spec) {
  spec.validate();
  TactileImage image;
  image.size = spec.image_size;
  image.pose = pose;
  image.depth.assign(static_cast<std::size_t>(spec.image_size) * spec.image_size, 0.0f);
  const UnitVec3 down = UnitVec3::from_normalized(-pose.rotation.col(2));
  const double top = spec.max_press_depth;
  for (std::uint32_t r = 0; r < spec.image_size; ++r) {
    for (std::uint32_t c = 0; c < spec.image_size; ++c) {
      if (!pixel_in_pad(spec, r, c)) continue;
      const auto uv = pixel_center(spec, r, c);
      const Vec3 origin = pose.apply(Vec3(uv.x(), uv.y(), top));
      const auto hit = mesh.ray_intersect(origin, down);
      if (!hit) continue;
      double value = 0.0;
      if (face_normal(mesh.mesh(), hit->face).dot(down.vec()) > 0.0) {
        value = 1.0;  // ray starts inside the object: fully indented
      } else {
        value = std::clamp((top - hit->t) / spec.max_press_depth, 0.0, 1.0);
      }
      image.depth[r * spec.image_size + c] = static_cast<float>(value);
    }
  }
  return image;
}

namespace {

using Polygon = std::vector<Vec3>;

// Keeps the part of `poly` with dot(n, p) <= offset.
Polygon clip(const Polygon& poly, const Vec3& n, double offset) {
  Polygon out;
  if (poly.empty()) return out;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec3& a = poly[i];
    const Vec3& b = poly[(i + 1) % poly.size()];
    const double da = n.dot(a) - offset;
    const double db = n.dot(b) - offset;
    if (da <= 0.0) out.push_back(a);
    if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
      out.push_back(a + (da / (da - db)) * (b - a));
    }
  }
  return out;
}

struct Patch {
  Vec3 a, b, c;  // sensor frame
  std::uint32_t face;
};

}  // namespace

PointCloud extract_local_cloud(const MeshQuery& mesh, const Pose& pose, const SensorSpec& spec,
                               std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw InvalidArgument("extract_local_cloud needs n >= 1");
  const Pose inv = pose.inverse();
  const double r = spec.footprint_radius;
  const double top = spec.max_press_depth;
  const auto& m = mesh.mesh();

  std::vector<Patch> patches;
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::uint32_t f = 0; f < m.faces.size(); ++f) {
    Polygon poly;
    for (auto idx : m.faces[f]) poly.push_back(inv.apply(m.vertices[idx]));
    const Vec3 n_local = (poly[1] - poly[0]).cross(poly[2] - poly[0]);
    if (!(n_local.z() > 0.0)) continue;  // must face the sensor
    poly = clip(poly, Vec3::UnitX(), r);
    poly = clip(poly, -Vec3::UnitX(), r);
    poly = clip(poly, Vec3::UnitY(), r);
    poly = clip(poly, -Vec3::UnitY(), r);
    poly = clip(poly, -Vec3::UnitZ(), 0.0);
    poly = clip(poly, Vec3::UnitZ(), top);
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      const double area = triangle_area(poly[0], poly[k], poly[k + 1]);
      if (!(area > 0.0)) continue;
      total += area;
      patches.push_back({poly[0], poly[k], poly[k + 1], f});
      cumulative.push_back(total);
    }
  }
  if (patches.empty()) throw NoContact("no mesh surface inside the sensor footprint");

  const UnitVec3 down = UnitVec3::from_normalized(-pose.rotation.col(2));
  Rng rng(seed, 0x636c6f7564);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  const std::size_t max_draws = 1000 * n + 10000;
  for (std::size_t draw = 0; draw < max_draws && cloud.size() < n; ++draw) {
    const double pick = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const auto& p = patches[std::min<std::size_t>(it - cumulative.begin(), patches.size() - 1)];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3 local = (1.0 - r1) * p.a + r1 * (1.0 - r2) * p.b + r1 * r2 * p.c;
    if (local.head<2>().squaredNorm() > r * r) continue;
    const auto hit = mesh.ray_intersect(pose.apply(Vec3(local.x(), local.y(), top)), down);
    if (!hit || std::abs(hit->t - (top - local.z())) > 1e-9) continue;  // occluded
    cloud.points.push_back(pose.apply(local));
    cloud.normals.push_back(face_normal(m, p.face));
  }
  if (cloud.size() < n) throw NoContact("contact patch too small to sample");
  return cloud;
}

std::optional<TouchRecord> press(const MeshQuery& mesh, const TouchRay& ray, const SensorSpec& spec,
                                 std::uint64_t shape_id, std::size_t cloud_points, std::uint64_t cloud_seed) {
  spec.validate();
  const Vec3& dir = ray.dir.vec();
  const Pose start = sensor_pose(ray.origin, ray.dir);

  // Far bounding plane: the plane has passed every vertex of the object.
  double travel_limit = 0.0;
  for (const auto& v : mesh.mesh().vertices) travel_limit = std::max(travel_limit, (v - ray.origin).dot(dir));
  if (travel_limit <= 0.0) return std::nullopt;

  // First-hit distance from the start plane per pad pixel. For a plane advanced
  // by s the pixel reads clamp((s - t) / max_press_depth, 0, 1) until it
  // saturates, which predicts the first step that crosses the threshold.
  const std::size_t pixels = static_cast<std::size_t>(spec.image_size) * spec.image_size;
  std::vector<double> first_hit;
  first_hit.reserve(pixels);
  for (std::uint32_t r = 0; r < spec.image_size; ++r) {
    for (std::uint32_t c = 0; c < spec.image_size; ++c) {
      if (!pixel_in_pad(spec, r, c)) continue;
      const auto uv = pixel_center(spec, r, c);
      if (auto hit = mesh.ray_intersect(start.apply(Vec3(uv.x(), uv.y(), 0.0)), ray.dir)) {
        first_hit.push_back(hit->t);
      }
    }
  }
  if (first_hit.empty()) return std::nullopt;

  const double threshold = spec.intensity_threshold / 255.0;
  const auto max_steps = static_cast<std::size_t>(std::ceil(travel_limit / spec.step));
  auto predicted_mean = [&](double s) {
    double total = 0.0;
    for (double t : first_hit) total += std::clamp((s - t) / spec.max_press_depth, 0.0, 1.0);
    return total / static_cast<double>(pixels);
  };

  std::size_t k = 0;
  while (k <= max_steps && !(predicted_mean(k * spec.step) > threshold)) ++k;

  for (; k <= max_steps; ++k) {
    const Pose pose = sensor_pose(ray.origin + (k * spec.step) * dir, ray.dir);
    TactileImage image = render_depth(mesh, pose, spec);
    if (!(image.mean() > threshold)) continue;
    TouchRecord record;
    record.pose = pose;
    record.shape_id = shape_id;
    try {
      record.local_cloud = extract_local_cloud(mesh, pose, spec, cloud_points, cloud_seed);
    } catch (const NoContact&) {
      return std::nullopt;
    }
    record.image = std::move(image);
    return record;
  }
  return std::nullopt;
}

std::vector<Vec3> back_project(const TactileImage& image, const SensorSpec& spec) {
  std::vector<Vec3> out;
  for (std::uint32_t r = 0; r < image.size; ++r) {
    for (std::uint32_t c = 0; c < image.size; ++c) {
      const double v = image.at(r, c);
      if (!(v > 0.0) || !(v < 1.0)) continue;
      const auto uv = pixel_center(spec, r, c);
      out.push_back(image.pose.apply(Vec3(uv.x(), uv.y(), v * spec.max_press_depth)));
    }
  }
  return out;
}

namespace {

void write_pose(std::ostream& out, const Pose& pose) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) io::write_pod<double>(out, pose.rotation(i, j));
  for (int i = 0; i < 3; ++i) io::write_pod<double>(out, pose.translation[i]);
}

Pose read_pose(std::istream& in) {
  Pose pose;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) pose.rotation(i, j) = io::read_pod<double>(in);
  for (int i = 0; i < 3; ++i) pose.translation[i] = io::read_pod<double>(in);
  return pose;
}

}  // namespace

void write_archive(std::ostream& out, const std::vector<TouchRecord>& records) {
  io::write_magic(out, "TTCH");
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint64_t>(out, records.size());
  for (const auto& rec : records) {
    io::write_pod<std::uint64_t>(out, rec.shape_id);
    write_pose(out, rec.pose);
    io::write_pod<std::uint32_t>(out, rec.image.size);
    for (float v : rec.image.depth) io::write_pod<float>(out, v);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rec.local_cloud.size()));
    for (std::size_t i = 0; i < rec.local_cloud.size(); ++i) {
      const Vec3& p = rec.local_cloud.points[i];
      const Vec3 n = rec.local_cloud.has_normals() ? rec.local_cloud.normals[i] : Vec3::Zero();
      for (int k = 0; k < 3; ++k) io::write_pod<float>(out, static_cast<float>(p[k]));
      for (int k = 0; k < 3; ++k) io::write_pod<float>(out, static_cast<float>(n[k]));
    }
  }
}

std::vector<TouchRecord> read_archive(std::istream& in) {
  io::expect_magic(in, "TTCH");
  if (const auto v = io::read_pod<std::uint32_t>(in); v != 1) {
    throw ParseError("unsupported TTCH version " + std::to_string(v));
  }
  const auto count = io::read_pod<std::uint64_t>(in);
  std::vector<TouchRecord> records;
  records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TouchRecord rec;
    rec.shape_id = io::read_pod<std::uint64_t>(in);
    rec.pose = read_pose(in);
    rec.image.size = io::read_pod<std::uint32_t>(in);
    rec.image.pose = rec.pose;
    rec.image.depth.resize(static_cast<std::size_t>(rec.image.size) * rec.image.size);
    for (auto& v : rec.image.depth) v = io::read_pod<float>(in);
    const auto n = io::read_pod<std::uint32_t>(in);
    rec.local_cloud.points.resize(n);
    rec.local_cloud.normals.resize(n);
    for (std::uint32_t j = 0; j < n; ++j) {
      for (int k = 0; k < 3; ++k) rec.local_cloud.points[j][k] = io::read_pod<float>(in);
      for (int k = 0; k < 3; ++k) rec.local_cloud.normals[j][k] = io::read_pod<float>(in);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_archive(const std::filesystem::path& path, const std::vector<TouchRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_archive(out, records);
}

std::vector<TouchRecord> load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_archive(in);
}

void write_pgm(std::ostream& out, const TactileImage& image) {
  out << "P5\n" << image.size << ' ' << image.size << "\n255\n";
  for (float v : image.depth) {
    const auto byte = static_cast<unsigned char>(std::lround(255.0 * std::clamp<double>(v, 0.0, 1.0)));
    out.put(static_cast<char>(byte));
  }
}

void save_pgm(const std::filesystem::path& path, const TactileImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_pgm(out, image);
}

}  // namespace touchsdf::touch
