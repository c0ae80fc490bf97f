#include "touchsdf/isosurface.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "mc_tables.hpp"

namespace touchsdf::iso {

namespace {

constexpr int kCornerOffset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr double kMinEdgeParam = 1e-7;

void check_grid(const Aabb& bounds, const std::array<std::size_t, 3>& res) {
  for (auto r : res) {
    if (r < 2) throw InvalidArgument("grid resolution must be >= 2 per axis");
  }
  if (!bounds.valid() || (bounds.extent().array() <= 0.0).any()) {
    throw InvalidArgument("grid bounds are degenerate");
  }
}

}  // namespace

Vec3 ScalarGrid::spacing() const {
  const Vec3 e = bounds.extent();
  return {e.x() / (resolution[0] - 1), e.y() / (resolution[1] - 1), e.z() / (resolution[2] - 1)};
}

Vec3 ScalarGrid::point(std::size_t i, std::size_t j, std::size_t k) const {
  const Vec3 e = bounds.extent();
  // computed per axis from the bounds so the last sample lands on hi exactly
  auto coord = [&](int axis, std::size_t n) {
    return n + 1 == resolution[axis] ? bounds.hi[axis]
                                     : bounds.lo[axis] + e[axis] * static_cast<double>(n) / (resolution[axis] - 1);
  };
  return {coord(0, i), coord(1, j), coord(2, k)};
}

ScalarGrid sample_grid(const ScalarField& f, const Aabb& bounds, std::array<std::size_t, 3> resolution) {
  check_grid(bounds, resolution);
  ScalarGrid g;
  g.resolution = resolution;
  g.bounds = bounds;
  g.values.resize(resolution[0] * resolution[1] * resolution[2]);
  for (std::size_t i = 0; i < resolution[0]; ++i)
    for (std::size_t j = 0; j < resolution[1]; ++j)
      for (std::size_t k = 0; k < resolution[2]; ++k) g.values[g.index(i, j, k)] = f(g.point(i, j, k));
  return g;
}

ScalarGrid sample_grid(const BatchField& f, const Aabb& bounds, std::array<std::size_t, 3> resolution,
                       std::size_t batch) {
  check_grid(bounds, resolution);
  ScalarGrid g;
  g.resolution = resolution;
  g.bounds = bounds;
  const std::size_t total = resolution[0] * resolution[1] * resolution[2];
  g.values.resize(total);
  std::vector<Vec3> pts;
  for (std::size_t start = 0; start < total; start += batch) {
    const std::size_t end = std::min(total, start + batch);
    pts.clear();
    for (std::size_t idx = start; idx < end; ++idx) {
      const std::size_t k = idx % resolution[2];
      const std::size_t j = (idx / resolution[2]) % resolution[1];
      const std::size_t i = idx / (resolution[1] * resolution[2]);
      pts.push_back(g.point(i, j, k));
    }
    const auto vals = f(pts);
    if (vals.size() != pts.size()) throw ShapeMismatch("batch field returned wrong number of values");
    std::copy(vals.begin(), vals.end(), g.values.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return g;
}

IsoResult marching_cubes(const ScalarGrid& grid, double iso) {
  check_grid(grid.bounds, grid.resolution);
  const auto [nx, ny, nz] = grid.resolution;
  if (grid.values.size() != nx * ny * nz) throw ShapeMismatch("grid value count does not match resolution");
  for (double v : grid.values) {
    if (!std::isfinite(v)) throw InvalidArgument("grid contains non-finite values");
  }

  IsoResult result;
  auto& mesh = result.mesh;
  // key: grid point index * 3 + axis of the edge leaving it in +axis direction
  std::unordered_map<std::size_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](std::size_t i, std::size_t j, std::size_t k, int c0, int c1) -> std::uint32_t {
    const int* o0 = kCornerOffset[c0];
    const int* o1 = kCornerOffset[c1];
    // orient the edge so it runs from the lower grid point along +axis
    const bool swap = (o0[0] + o0[1] + o0[2]) > (o1[0] + o1[1] + o1[2]);
    const int* a = swap ? o1 : o0;
    const int* b = swap ? o0 : o1;
    const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
    const std::size_t ia = i + a[0], ja = j + a[1], ka = k + a[2];
    const std::size_t key = grid.index(ia, ja, ka) * 3 + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;

    const std::size_t ib = i + b[0], jb = j + b[1], kb = k + b[2];
    const double va = grid.values[grid.index(ia, ja, ka)];
    const double vb = grid.values[grid.index(ib, jb, kb)];
    double t = 0.5;
    if (va != vb) t = std::clamp((iso - va) / (vb - va), kMinEdgeParam, 1.0 - kMinEdgeParam);
    const Vec3 pa = grid.point(ia, ja, ka);
    const Vec3 pb = grid.point(ib, jb, kb);
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(key, id);
    return id;
  };

  for (std::size_t i = 0; i + 1 < nx; ++i) {
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      for (std::size_t k = 0; k + 1 < nz; ++k) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto* o = kCornerOffset[c];
          if (grid.values[grid.index(i + o[0], j + o[1], k + o[2])] < iso) cube |= 1 << c;
        }
        if (detail::kEdgeTable[cube] == 0) continue;
        std::uint32_t edge_ids[12];
        for (int e = 0; e < 12; ++e) {
          if (detail::kEdgeTable[cube] & (1 << e)) {
            edge_ids[e] = vertex_on_edge(i, j, k, detail::kEdgeCorners[e][0], detail::kEdgeCorners[e][1]);
          }
        }
        const int* tri = detail::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          // table winding is clockwise seen from outside; reverse it
          mesh.faces.push_back({edge_ids[tri[t]], edge_ids[tri[t + 2]], edge_ids[tri[t + 1]]});
        }
      }
    }
  }
  result.empty_level_set = mesh.faces.empty();
  return result;
}

}  // namespace touchsdf::iso
