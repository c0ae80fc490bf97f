#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "touchsdf/errors.hpp"

namespace touchsdf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Point3 = Vec3;

// A direction of Euclidean norm 1. Construction normalizes and rejects
// zero-length input.
class UnitVec3 {
 public:
  explicit UnitVec3(const Vec3& v);
  static UnitVec3 from_normalized(const Vec3& v);  // trusts the caller

  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }
  double operator[](int i) const { return v_[i]; }
  UnitVec3 operator-() const { return from_normalized(-v_); }

 private:
  UnitVec3() = default;
  Vec3 v_ = Vec3::UnitZ();
};

// Rigid transform mapping a local frame into the world frame:
// p_world = rotation * p_local + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  // Throws InvalidArgument unless rotation is orthonormal with det +1.
  static Pose make(const Mat3& rotation, const Vec3& translation);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }
  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;
  bool is_valid(double tol = 1e-9) const;
};

using Face = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }
};

struct SdfSample {
  Vec3 x = Vec3::Zero();
  double s = 0.0;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or parallel to points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
  }
};

Aabb bounds(const TriangleMesh& mesh);
Aabb bounds(const std::vector<Vec3>& points);

// Face indices in range; throws ParseError otherwise.
void check_indices(const TriangleMesh& mesh);

// Every undirected edge is used by exactly two faces and every directed edge
// exactly once (closed, consistently wound 2-manifold).
bool is_watertight(const TriangleMesh& mesh);

struct LoadedMesh {
  TriangleMesh mesh;
  bool watertight = false;
};

// Wavefront OBJ, `v` and `f` records only; polygons are fan-triangulated.
LoadedMesh parse_obj(std::istream& in, bool require_watertight = false);
LoadedMesh load_mesh(const std::filesystem::path& path, bool require_watertight = false);
void write_obj(std::ostream& out, const TriangleMesh& mesh);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

// out = scale * (in + offset)
struct NormalizedMesh {
  TriangleMesh mesh;
  double scale = 1.0;
  Vec3 offset = Vec3::Zero();
};

// Centers the bounding box at the origin and scales the farthest vertex to
// radius 1.
NormalizedMesh normalize_mesh(const TriangleMesh& mesh);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
Vec3 face_normal(const TriangleMesh& mesh, std::size_t face);  // unit, or zero if degenerate
double surface_area(const TriangleMesh& mesh);
// Signed enclosed volume; positive for outward-wound closed meshes.
double signed_volume(const TriangleMesh& mesh);

// Area-weighted uniform surface samples with face normals.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

TriangleMesh transform(const TriangleMesh& mesh, const Pose& pose);

}  // namespace touchsdf
