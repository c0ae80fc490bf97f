#include "touchsdf/mesh_query.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace touchsdf {

namespace {

constexpr std::uint32_t kLeafSize = 4;

// Fixed, irrational-looking directions for the parity vote.
const std::array<Vec3, 5> kVoteDirections = {
    Vec3(0.5773502691896258, 0.5773502691896258, 0.5773502691896258),
    Vec3(-0.3345408367038571, 0.8523174209462733, -0.4020152815340331),
    Vec3(0.8915931611290337, -0.2018390474362913, -0.4053961291540214),
    Vec3(-0.6263911347117613, -0.5179052393219371, 0.5826148470287121),
    Vec3(0.1357209853416718, -0.3012834722513092, -0.9438274170361283),
};

bool ray_box(const Vec3& origin, const Vec3& inv_dir, const Aabb& box, double t_max, double& t_enter) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    double a = (box.lo[k] - origin[k]) * inv_dir[k];
    double b = (box.hi[k] - origin[k]) * inv_dir[k];
    if (std::isnan(a) || std::isnan(b)) {
      // direction component zero and origin on a slab face
      if (origin[k] < box.lo[k] || origin[k] > box.hi[k]) return false;
      continue;
    }
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  t_enter = t0;
  return true;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const double denom = va + vb + vc;
  if (denom == 0.0) {
    // degenerate triangle: fall back to the closest of its edges
    auto seg = [&](const Vec3& s, const Vec3& e) {
      const Vec3 d = e - s;
      const double l2 = d.squaredNorm();
      const double t = l2 > 0.0 ? std::clamp((p - s).dot(d) / l2, 0.0, 1.0) : 0.0;
      return Vec3(s + t * d);
    };
    Vec3 best = seg(a, b);
    for (const Vec3& q : {seg(b, c), seg(c, a)}) {
      if ((q - p).squaredNorm() < (best - p).squaredNorm()) best = q;
    }
    return best;
  }
  const double v = vb / denom;
  const double w = vc / denom;
  return a + ab * v + ac * w;
}

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                         const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (det == 0.0) return std::nullopt;  // parallel
  const double inv = 1.0 / det;
  const Vec3 tv = origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (t < 0.0) return std::nullopt;
  return t;
}

MeshQuery::MeshQuery(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  check_indices(mesh_);
  if (mesh_.faces.empty()) throw DegenerateMesh("mesh has no faces");
  watertight_ = is_watertight(mesh_);
  const auto n = static_cast<std::uint32_t>(mesh_.faces.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0u);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t f = 0; f < n; ++f) {
    centroids[f] = (corner(f, 0) + corner(f, 1) + corner(f, 2)) / 3.0;
  }
  nodes_.reserve(2 * n / kLeafSize + 2);
  build(0, n, centroids);
}

std::uint32_t MeshQuery::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb cbox;
  for (std::uint32_t i = begin; i < end; ++i) {
    const auto f = order_[i];
    for (int k = 0; k < 3; ++k) box.expand(corner(f, k));
    cbox.expand(centroids[f]);
  }
  nodes_[id].box = box;
  if (end - begin <= kLeafSize) {
    nodes_[id].leaf = true;
    nodes_[id].left = begin;
    nodes_[id].right = end - begin;
    return id;
  }
  int axis = 0;
  cbox.extent().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (centroids[a][axis] != centroids[b][axis]) return centroids[a][axis] < centroids[b][axis];
                     return a < b;
                   });
  const auto left = build(begin, mid, centroids);
  const auto right = build(mid, end, centroids);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

ClosestPoint MeshQuery::closest_point(const Vec3& x) const {
  ClosestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> stack{0};
  stack.reserve(64);
  while (!stack.empty()) {
    const auto& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.box.squared_distance(x) >= best_d2) continue;
    if (node.leaf) {
      for (std::uint32_t i = node.left; i < node.left + node.right; ++i) {
        const auto f = order_[i];
        const Vec3 q = closest_point_on_triangle(x, corner(f, 0), corner(f, 1), corner(f, 2));
        const double d2 = (q - x).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && f < best.face)) {
          best_d2 = d2;
          best.point = q;
          best.face = f;
        }
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squared_distance(x);
    const double dr = nodes_[node.right].box.squared_distance(x);
    // push the farther child first so the nearer one is visited next
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

std::optional<RayHit> MeshQuery::ray_intersect(const Vec3& origin, const UnitVec3& dir) const {
  const Vec3& d = dir.vec();
  const Vec3 inv = d.cwiseInverse();
  double best_t = std::numeric_limits<double>::infinity();
  std::uint32_t best_face = 0;
  bool found = false;
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const auto& node = nodes_[stack.back()];
    stack.pop_back();
    double t_enter = 0.0;
    if (!ray_box(origin, inv, node.box, best_t, t_enter)) continue;
    if (node.leaf) {
      for (std::uint32_t i = node.left; i < node.left + node.right; ++i) {
        const auto f = order_[i];
        if (auto t = intersect_triangle(origin, d, corner(f, 0), corner(f, 1), corner(f, 2))) {
          if (*t < best_t || (*t == best_t && f < best_face)) {
            best_t = *t;
            best_face = f;
            found = true;
          }
        }
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  if (!found) return std::nullopt;
  return RayHit{best_t, best_face, origin + best_t * d};
}

std::size_t MeshQuery::count_crossings(const Vec3& origin, const Vec3& dir) const {
  const Vec3 inv = dir.cwiseInverse();
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const auto& node = nodes_[stack.back()];
    stack.pop_back();
    double t_enter = 0.0;
    if (!ray_box(origin, inv, node.box, inf, t_enter)) continue;
    if (node.leaf) {
      for (std::uint32_t i = node.left; i < node.left + node.right; ++i) {
        const auto f = order_[i];
        if (auto t = intersect_triangle(origin, dir, corner(f, 0), corner(f, 1), corner(f, 2)); t && *t > 0.0) {
          ++count;
        }
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  return count;
}

bool MeshQuery::inside(const Vec3& x) const {
  int odd = 0;
  for (const auto& d : kVoteDirections) odd += static_cast<int>(count_crossings(x, d) % 2);
  return odd * 2 > static_cast<int>(kVoteDirections.size());
}

SdfSample MeshQuery::signed_distance(const Vec3& x) const {
  if (!watertight_) throw NonWatertight("signed distance needs a closed mesh");
  const auto cp = closest_point(x);
  if (cp.distance == 0.0) return {x, 0.0};
  return {x, inside(x) ? -cp.distance : cp.distance};
}

ClosestPoint closest_point(const TriangleMesh& mesh, const Vec3& x) {
  return MeshQuery(mesh).closest_point(x);
}

std::optional<RayHit> ray_intersect(const TriangleMesh& mesh, const Vec3& origin, const UnitVec3& dir) {
  return MeshQuery(mesh).ray_intersect(origin, dir);
}

SdfSample signed_distance(const TriangleMesh& mesh, const Vec3& x) {
  if (!is_watertight(mesh)) throw NonWatertight("signed distance needs a closed mesh");
  return MeshQuery(mesh).signed_distance(x);
}

}  // namespace touchsdf
