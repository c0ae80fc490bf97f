#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "touchsdf/geometry.hpp"

namespace touchsdf {

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  std::uint32_t face = 0;
};

struct RayHit {
  double t = 0.0;
  std::uint32_t face = 0;
  Vec3 hit = Vec3::Zero();
};

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Moller-Trumbore; returns t >= 0 of the hit, if any.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                         const Vec3& b, const Vec3& c);

// Spatial queries over a fixed mesh, backed by a median-split AABB tree.
// Immutable after construction; concurrent queries are safe.
class MeshQuery {
 public:
  explicit MeshQuery(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  bool watertight() const { return watertight_; }
  const Aabb& box() const { return nodes_.front().box; }

  ClosestPoint closest_point(const Vec3& x) const;
  std::optional<RayHit> ray_intersect(const Vec3& origin, const UnitVec3& dir) const;
  // Number of triangles crossed by the open ray (t > 0).
  std::size_t count_crossings(const Vec3& origin, const Vec3& dir) const;
  // Majority vote of ray parity over five fixed directions.
  bool inside(const Vec3& x) const;
  // Negative inside. Throws NonWatertight for open meshes.
  SdfSample signed_distance(const Vec3& x) const;

 private:
  struct Node {
    Aabb box;
    std::uint32_t left = 0;   // interior: left child; leaf: first triangle slot
    std::uint32_t right = 0;  // interior: right child; leaf: triangle count
    bool leaf = false;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids);
  const Vec3& corner(std::uint32_t face, int k) const { return mesh_.vertices[mesh_.faces[face][k]]; }

  TriangleMesh mesh_;
  bool watertight_ = false;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;  // triangle ids, grouped by leaf
};

ClosestPoint closest_point(const TriangleMesh& mesh, const Vec3& x);
std::optional<RayHit> ray_intersect(const TriangleMesh& mesh, const Vec3& origin, const UnitVec3& dir);
SdfSample signed_distance(const TriangleMesh& mesh, const Vec3& x);

}  // namespace touchsdf
