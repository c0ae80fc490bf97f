#pragma once

#include <functional>

#include "touchsdf/geometry.hpp"

// Closed, outward-wound tessellations of simple solids and their analytic
// signed distance functions. All solids are centred at the origin, with the
// z axis as the axis of revolution.
namespace touchsdf::shapes {

TriangleMesh icosphere(double radius, int subdivisions);
// Each face is split into an n x n grid of quads.
TriangleMesh box(const Vec3& half_extents, int subdivisions = 1);
TriangleMesh cylinder(double radius, double half_height, int segments);
TriangleMesh capsule(double radius, double half_height, int segments);

double sphere_sdf(const Vec3& p, double radius);
double box_sdf(const Vec3& p, const Vec3& half_extents);
double cylinder_sdf(const Vec3& p, double radius, double half_height);
double capsule_sdf(const Vec3& p, double radius, double half_height);

// Largest distance between an icosphere of the given radius and subdivision
// level and the true sphere: radius minus the smallest face-plane distance.
double icosphere_faceting_error(double radius, int subdivisions);

// Zero level set of `sdf` extracted with marching cubes on a cubic grid of
// `resolution` samples per axis over `bounds`. Throws TessellationFailure
// unless the result is watertight.
TriangleMesh mesh_from_sdf(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds, int resolution);

}  // namespace touchsdf::shapes
