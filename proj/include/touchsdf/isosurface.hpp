#pragma once

#include <array>
#include <functional>
#include <vector>

#include "touchsdf/geometry.hpp"

namespace touchsdf::iso {

using ScalarField = std::function<double(const Vec3&)>;
// Evaluates a batch of points at once; must agree with the pointwise field.
using BatchField = std::function<std::vector<double>(const std::vector<Vec3>&)>;

// Regular grid of samples including both bounding faces. values[(i*ny + j)*nz + k]
// is the field at lo + (i*dx, j*dy, k*dz): x slowest, z fastest.
struct ScalarGrid {
  std::array<std::size_t, 3> resolution{2, 2, 2};
  Aabb bounds;
  std::vector<double> values;

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * resolution[1] + j) * resolution[2] + k;
  }
  Vec3 spacing() const;
  Vec3 point(std::size_t i, std::size_t j, std::size_t k) const;
  double cell_diagonal() const { return spacing().norm(); }
};

ScalarGrid sample_grid(const ScalarField& f, const Aabb& bounds, std::array<std::size_t, 3> resolution);
// Evaluates in z-slabs of `batch` points to bound memory.
ScalarGrid sample_grid(const BatchField& f, const Aabb& bounds, std::array<std::size_t, 3> resolution,
                       std::size_t batch = 1 << 16);

struct IsoResult {
  TriangleMesh mesh;
  bool empty_level_set = false;  // no sign change anywhere in the grid
};

// Marching cubes with the fixed 256-case table. Values below `iso` are inside;
// triangles are wound so normals point toward larger values. Vertices shared
// between cells are welded, and interpolation parameters are kept strictly
// inside (0, 1); an edge whose endpoints both equal iso gets its midpoint.
IsoResult marching_cubes(const ScalarGrid& grid, double iso = 0.0);

}  // namespace touchsdf::iso
