#include "touchsdf/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include "touchsdf/isosurface.hpp"

namespace touchsdf::shapes {

namespace {

using std::numbers::pi;

std::uint32_t add_vertex(TriangleMesh& m, const Vec3& v) {
  m.vertices.push_back(v);
  return static_cast<std::uint32_t>(m.vertices.size() - 1);
}

// Rings of a solid of revolution about z. `profile` lists (radius, z) from the
// top pole to the bottom pole; entries with radius 0 become single vertices.
TriangleMesh revolve(const std::vector<std::pair<double, double>>& profile, int segments) {
  TriangleMesh m;
  std::vector<std::vector<std::uint32_t>> rings;
  for (const auto& [r, z] : profile) {
    std::vector<std::uint32_t> ring;
    if (r == 0.0) {
      ring.push_back(add_vertex(m, Vec3(0.0, 0.0, z)));
    } else {
      for (int s = 0; s < segments; ++s) {
        const double a = 2.0 * pi * s / segments;
        ring.push_back(add_vertex(m, Vec3(r * std::cos(a), r * std::sin(a), z)));
      }
    }
    rings.push_back(std::move(ring));
  }
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    const auto& up = rings[k];
    const auto& dn = rings[k + 1];
    for (int s = 0; s < segments; ++s) {
      const int t = (s + 1) % segments;
      if (up.size() == 1) {
        m.faces.push_back({up[0], dn[s], dn[t]});
      } else if (dn.size() == 1) {
        m.faces.push_back({up[s], dn[0], up[t]});
      } else {
        m.faces.push_back({up[s], dn[s], dn[t]});
        m.faces.push_back({up[s], dn[t], up[t]});
      }
    }
  }
  return m;
}

}  // namespace

TriangleMesh icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  for (const Vec3& v : {Vec3(-1, t, 0), Vec3(1, t, 0), Vec3(-1, -t, 0), Vec3(1, -t, 0), Vec3(0, -1, t),
                        Vec3(0, 1, t), Vec3(0, -1, -t), Vec3(0, 1, -t), Vec3(t, 0, -1), Vec3(t, 0, 1),
                        Vec3(-t, 0, -1), Vec3(-t, 0, 1)}) {
    m.vertices.push_back(v.normalized());
  }
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      const auto id = add_vertex(m, (m.vertices[a] + m.vertices[b]).normalized());
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const auto ab = midpoint(f[0], f[1]);
      const auto bc = midpoint(f[1], f[2]);
      const auto ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

double icosphere_faceting_error(double radius, int subdivisions) {
  const auto m = icosphere(radius, subdivisions);
  double min_plane = radius;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    min_plane = std::min(min_plane, std::abs(face_normal(m, f).dot(m.vertices[m.faces[f][0]])));
  }
  return radius - min_plane;
}

TriangleMesh box(const Vec3& half, int subdivisions) {
  const int n = std::max(1, subdivisions);
  TriangleMesh m;
  std::map<std::tuple<int, int, int>, std::uint32_t> lattice;
  auto vertex = [&](int a, int b, int c) {
    const auto key = std::make_tuple(a, b, c);
    if (auto it = lattice.find(key); it != lattice.end()) return it->second;
    const Vec3 p(-half.x() + 2.0 * half.x() * a / n, -half.y() + 2.0 * half.y() * b / n,
                 -half.z() + 2.0 * half.z() * c / n);
    const auto id = add_vertex(m, p);
    lattice.emplace(key, id);
    return id;
  };
  // For each axis and side, walk the face grid with (u, v) chosen so that
  // u x v points outward.
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int u_axis = (axis + 1) % 3;
      const int v_axis = (axis + 2) % 3;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          auto at = [&](int di, int dj) {
            int c[3];
            c[axis] = side * n;
            c[u_axis] = i + di;
            c[v_axis] = j + dj;
            return vertex(c[0], c[1], c[2]);
          };
          const auto p00 = at(0, 0), p10 = at(1, 0), p11 = at(1, 1), p01 = at(0, 1);
          if (side == 1) {
            m.faces.push_back({p00, p10, p11});
            m.faces.push_back({p00, p11, p01});
          } else {
            m.faces.push_back({p00, p11, p10});
            m.faces.push_back({p00, p01, p11});
          }
        }
      }
    }
  }
  return m;
}

TriangleMesh cylinder(double radius, double half_height, int segments) {
  segments = std::max(segments, 3);
  const int stacks = std::max(1, static_cast<int>(std::lround(segments * half_height / (pi * radius))));
  const int cap_rings = std::max(1, segments / 8);
  std::vector<std::pair<double, double>> profile;
  profile.emplace_back(0.0, half_height);
  for (int k = 1; k <= cap_rings; ++k) profile.emplace_back(radius * k / cap_rings, half_height);
  for (int k = 1; k < stacks; ++k) profile.emplace_back(radius, half_height - 2.0 * half_height * k / stacks);
  for (int k = cap_rings; k >= 1; --k) profile.emplace_back(radius * k / cap_rings, -half_height);
  profile.emplace_back(0.0, -half_height);
  return revolve(profile, segments);
}

TriangleMesh capsule(double radius, double half_height, int segments) {
  segments = std::max(segments, 4);
  const int quarter = std::max(2, segments / 4);
  const int stacks = std::max(1, static_cast<int>(std::lround(segments * half_height / (pi * radius))));
  std::vector<std::pair<double, double>> profile;
  profile.emplace_back(0.0, half_height + radius);
  for (int k = 1; k <= quarter; ++k) {
    const double a = 0.5 * pi * k / quarter;
    profile.emplace_back(radius * std::sin(a), half_height + radius * std::cos(a));
  }
  for (int k = 1; k < stacks; ++k) profile.emplace_back(radius, half_height - 2.0 * half_height * k / stacks);
  for (int k = quarter; k >= 1; --k) {
    const double a = 0.5 * pi * k / quarter;
    profile.emplace_back(radius * std::sin(a), -half_height - radius * std::cos(a));
  }
  profile.emplace_back(0.0, -half_height - radius);
  return revolve(profile, segments);
}

double sphere_sdf(const Vec3& p, double radius) { return p.norm() - radius; }

double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double cylinder_sdf(const Vec3& p, double radius, double half_height) {
  const Eigen::Vector2d d(std::hypot(p.x(), p.y()) - radius, std::abs(p.z()) - half_height);
  return std::min(std::max(d.x(), d.y()), 0.0) + d.cwiseMax(0.0).norm();
}

double capsule_sdf(const Vec3& p, double radius, double half_height) {
  const double z = std::clamp(p.z(), -half_height, half_height);
  return (p - Vec3(0.0, 0.0, z)).norm() - radius;
}

TriangleMesh mesh_from_sdf(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds, int resolution) {
  const auto r = static_cast<std::size_t>(resolution);
  const auto grid = iso::sample_grid(sdf, bounds, {r, r, r});
  auto result = iso::marching_cubes(grid, 0.0);
  if (result.empty_level_set) throw TessellationFailure("field has no zero crossing inside the bounds");
  if (!is_watertight(result.mesh)) throw TessellationFailure("extracted surface is not watertight");
  return std::move(result.mesh);
}

}  // namespace touchsdf::shapes
