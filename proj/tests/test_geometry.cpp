#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "touchsdf/geometry.hpp"
#include "touchsdf/mesh_query.hpp"
#include "touchsdf/primitives.hpp"
#include "touchsdf/rng.hpp"
#include "touchsdf/sdf_dataset.hpp"

using namespace touchsdf;

namespace {

const char* kCubeObj = R"(# unit cube [-1,1]^3
v -1 -1 -1
v  1 -1 -1
v  1  1 -1
v -1  1 -1
v -1 -1  1
v  1 -1  1
v  1  1  1
v -1  1  1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

LoadedMesh parse(const std::string& text, bool require = false) {
  std::istringstream in(text);
  return parse_obj(in, require);
}

Vec3 random_point(Rng& rng, double half) {
  return {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
}

}  // namespace

TEST(LoadMesh, CubeIsWatertight) {
  const auto loaded = parse(kCubeObj);
  EXPECT_EQ(loaded.mesh.vertices.size(), 8u);
  EXPECT_EQ(loaded.mesh.faces.size(), 12u);
  EXPECT_TRUE(loaded.watertight);
  EXPECT_GT(signed_volume(loaded.mesh), 0.0);
}

TEST(LoadMesh, QuadIsFanTriangulated) {
  const auto loaded = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n");
  ASSERT_EQ(loaded.mesh.faces.size(), 2u);
  EXPECT_EQ(loaded.mesh.faces[0], (Face{0, 1, 2}));
  EXPECT_EQ(loaded.mesh.faces[1], (Face{0, 2, 3}));
  EXPECT_FALSE(loaded.watertight);
}

TEST(LoadMesh, NegativeIndicesAreRelative) {
  const auto loaded = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
  EXPECT_EQ(loaded.mesh.faces[0], (Face{0, 1, 2}));
}

TEST(LoadMesh, ZeroIndexIsParseError) {
  EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"), ParseError);
}

TEST(LoadMesh, MalformedInputIsParseError) {
  EXPECT_THROW(parse("v 0 0\n"), ParseError);
  EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"), ParseError);
  EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nf 1 2\n"), ParseError);
}

TEST(LoadMesh, OpenMeshRejectedWhenWatertightRequired) {
  EXPECT_THROW(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", true), NonManifold);
}

TEST(LoadMesh, ObjRoundTrip) {
  const auto sphere = shapes::icosphere(1.0, 2);
  std::stringstream ss;
  write_obj(ss, sphere);
  const auto back = parse_obj(ss);
  ASSERT_EQ(back.mesh.faces, sphere.faces);
  EXPECT_TRUE(back.watertight);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) {
    EXPECT_LT((back.mesh.vertices[i] - sphere.vertices[i]).norm(), 1e-8);
  }
}

TEST(NormalizeMesh, CubeCornersAtTwo) {
  const auto cube = shapes::box(Vec3(2, 2, 2));
  const auto n = normalize_mesh(cube);
  EXPECT_NEAR(n.scale, 1.0 / (2.0 * std::sqrt(3.0)), 1e-15);
  EXPECT_LT(n.offset.norm(), 1e-15);
  double r = 0.0;
  for (const auto& v : n.mesh.vertices) r = std::max(r, v.norm());
  EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(NormalizeMesh, OffsetCentresBoundingBox) {
  auto cube = shapes::box(Vec3(1, 2, 3));
  for (auto& v : cube.vertices) v += Vec3(5, -1, 2);
  const auto n = normalize_mesh(cube);
  EXPECT_LT((n.offset - Vec3(-5, 1, -2)).norm(), 1e-12);
  EXPECT_LT(bounds(n.mesh).center().norm(), 1e-12);
}

TEST(NormalizeMesh, Idempotent) {
  auto mesh = shapes::capsule(0.3, 0.7, 24);
  for (auto& v : mesh.vertices) v += Vec3(0.1, 0.2, -0.3);
  const auto once = normalize_mesh(mesh);
  const auto twice = normalize_mesh(once.mesh);
  EXPECT_NEAR(twice.scale, 1.0, 1e-9);
  EXPECT_LT(twice.offset.norm(), 1e-9);
}

TEST(NormalizeMesh, SinglePointIsDegenerate) {
  TriangleMesh m;
  m.vertices = {Vec3(1, 1, 1)};
  m.faces = {{0, 0, 0}};
  EXPECT_THROW(normalize_mesh(m), DegenerateMesh);
  EXPECT_THROW(normalize_mesh(TriangleMesh{}), DegenerateMesh);
}

TEST(Pose, InverseComposesToIdentity) {
  const Mat3 r = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Pose p = Pose::make(r, Vec3(0.3, -1, 2));
  const Pose id = p * p.inverse();
  EXPECT_LT((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(id.translation.norm(), 1e-9);
  Mat3 bad = r;
  bad.col(0) *= 2.0;
  EXPECT_THROW(Pose::make(bad, Vec3::Zero()), InvalidArgument);
  EXPECT_THROW(Pose::make(-Mat3::Identity(), Vec3::Zero()), InvalidArgument);
}

TEST(ClosestPoint, AnalyticCases) {
  const auto sphere = shapes::icosphere(1.0, 3);
  const double facet = shapes::icosphere_faceting_error(1.0, 3);
  const auto c = closest_point(sphere, Vec3::Zero());
  EXPECT_NEAR(c.distance, 1.0, facet + 1e-12);

  const auto on_vertex = closest_point(sphere, sphere.vertices[17]);
  EXPECT_EQ(on_vertex.distance, 0.0);

  const auto cube = parse(kCubeObj).mesh;
  const auto q = closest_point(cube, Vec3(2, 0, 0));
  EXPECT_NEAR(q.distance, 1.0, 1e-15);
  EXPECT_LT((q.point - Vec3(1, 0, 0)).norm(), 1e-15);
}

TEST(ClosestPoint, NeverFartherThanAnyVertexAndMatchesBruteForce) {
  const auto mesh = shapes::capsule(0.4, 0.5, 20);
  const MeshQuery query(mesh);
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec3 x = random_point(rng, 1.5);
    const auto c = query.closest_point(x);
    EXPECT_NEAR((c.point - x).norm(), c.distance, 1e-12);
    double brute = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      const auto& t = mesh.faces[f];
      brute = std::min(brute, (closest_point_on_triangle(x, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                                         mesh.vertices[t[2]]) - x).norm());
    }
    EXPECT_NEAR(c.distance, brute, 1e-12);
    for (const auto& v : mesh.vertices) EXPECT_LE(c.distance, (v - x).norm() + 1e-12);
  }
}

TEST(RayIntersect, AnalyticCases) {
  const auto cube = parse(kCubeObj).mesh;
  const auto hit = ray_intersect(cube, Vec3(0, 0, 5), UnitVec3(Vec3(0, 0, -1)));
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->t, 4.0, 1e-12);
  EXPECT_LT((hit->hit - Vec3(0, 0, 1)).norm(), 1e-12);

  EXPECT_FALSE(ray_intersect(cube, Vec3(0, 0, 2), UnitVec3(Vec3(1, 0, 0))));
  EXPECT_FALSE(ray_intersect(cube, Vec3(0, 0, 5), UnitVec3(Vec3(0, 0, 1))));

  const MeshQuery query(cube);
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const Vec3 origin = random_point(rng, 0.99);
    const UnitVec3 dir(Vec3(rng.normal(), rng.normal(), rng.normal()));
    const auto h = query.ray_intersect(origin, dir);
    ASSERT_TRUE(h);
    EXPECT_LE(h->t, std::sqrt(3.0) * 2.0);
  }
  // from the centre every exit lies within half the diagonal
  for (int i = 0; i < 100; ++i) {
    const auto h = query.ray_intersect(Vec3::Zero(), UnitVec3(Vec3(rng.normal(), rng.normal(), rng.normal())));
    ASSERT_TRUE(h);
    EXPECT_LE(h->t, std::sqrt(3.0) + 1e-12);
  }
}

TEST(RayIntersect, HitLiesOnReportedTrianglePlane) {
  const auto mesh = shapes::icosphere(0.8, 2);
  const MeshQuery query(mesh);
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    const Vec3 origin = random_point(rng, 2.0);
    const UnitVec3 dir(-origin + random_point(rng, 0.3));
    const auto h = query.ray_intersect(origin, dir);
    if (!h) continue;
    EXPECT_LT((origin + h->t * dir.vec() - h->hit).norm(), 1e-12);
    const Vec3 n = face_normal(mesh, h->face);
    EXPECT_LT(std::abs(n.dot(h->hit - mesh.vertices[mesh.faces[h->face][0]])), 1e-9);
  }
}

TEST(SignedDistance, SphereAnalytic) {
  const auto sphere = shapes::icosphere(1.0, 4);
  const double facet = shapes::icosphere_faceting_error(1.0, 4);
  EXPECT_NEAR(signed_distance(sphere, Vec3(0.5, 0, 0)).s, -0.5, facet);
  EXPECT_NEAR(signed_distance(sphere, Vec3(2, 0, 0)).s, 1.0, facet);
}

TEST(SignedDistance, BoxMatchesAnalyticOnRandomPoints) {
  const Vec3 half(0.5, 0.5, 0.5);
  const MeshQuery query(shapes::box(half, 1));
  Rng rng(1234);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x = random_point(rng, 1.1);
    worst = std::max(worst, std::abs(query.signed_distance(x).s - shapes::box_sdf(x, half)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(SignedDistance, OpenMeshThrows) {
  const auto open = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").mesh;
  EXPECT_THROW(signed_distance(open, Vec3(1, 1, 1)), NonWatertight);
}

TEST(SignedDistance, OneLipschitz) {
  const MeshQuery query(shapes::cylinder(0.5, 0.6, 24));
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const Vec3 x = random_point(rng, 1.2);
    const Vec3 y = random_point(rng, 1.2);
    const double dx = std::abs(query.signed_distance(x).s);
    const double dy = std::abs(query.signed_distance(y).s);
    EXPECT_LE(dx - dy, (x - y).norm() + 1e-6);
  }
}

TEST(SignedDistance, SignFlipsExactlyAtSurfaceAlongSegments) {
  const auto sphere = shapes::icosphere(0.7, 3);
  const MeshQuery query(sphere);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 dir = UnitVec3(Vec3(rng.normal(), rng.normal(), rng.normal())).vec();
    const auto hit = query.ray_intersect(Vec3::Zero(), UnitVec3::from_normalized(dir));
    ASSERT_TRUE(hit);
    int flips = 0;
    double prev = query.signed_distance(Vec3::Zero()).s;
    for (int k = 1; k <= 400; ++k) {
      const double t = 1.2 * k / 400.0;
      const double s = query.signed_distance(t * dir).s;
      if ((s < 0) != (prev < 0)) {
        ++flips;
        EXPECT_NEAR(t, hit->t, 1.2 / 400.0 + 1e-12);
      }
      prev = s;
    }
    EXPECT_EQ(flips, 1);
  }
}

TEST(SampleSurface, AreaProportionalCounts) {
  TriangleMesh m;
  // areas 1 and 3
  m.vertices = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(3, 0, 1), Vec3(0, 2, 1)};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  ASSERT_NEAR(triangle_area(m.vertices[0], m.vertices[1], m.vertices[2]), 1.0, 1e-15);
  ASSERT_NEAR(triangle_area(m.vertices[3], m.vertices[4], m.vertices[5]), 3.0, 1e-15);
  const std::size_t n = 40000;
  const auto cloud = sample_surface(m, n, 77);
  std::size_t first = 0;
  for (const auto& p : cloud.points) first += p.z() < 0.5;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  EXPECT_NEAR(static_cast<double>(first), 10000.0, 3.0 * sigma);
}

TEST(SampleSurface, SinglePointOnFacePlaneAndDeterministic) {
  const auto mesh = shapes::icosphere(1.0, 1);
  const auto one = sample_surface(mesh, 1, 4);
  ASSERT_EQ(one.size(), 1u);
  const auto c = closest_point(mesh, one.points[0]);
  EXPECT_LT(c.distance, 1e-12);
  EXPECT_NEAR(one.normals[0].norm(), 1.0, 1e-12);

  const auto a = sample_surface(mesh, 500, 99);
  const auto b = sample_surface(mesh, 500, 99);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.normals, b.normals);
}

TEST(SurfaceArea, Cases) {
  auto cube = shapes::box(Vec3(0.5, 0.5, 0.5));
  for (auto& v : cube.vertices) v += Vec3(0.5, 0.5, 0.5);
  EXPECT_NEAR(surface_area(cube), 6.0, 1e-12);

  TriangleMesh line;
  line.vertices = {Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)};
  line.faces = {{0, 1, 2}};
  EXPECT_EQ(surface_area(line), 0.0);

  EXPECT_NEAR(surface_area(shapes::icosphere(1.0, 3)), 4.0 * std::numbers::pi, 0.01 * 4.0 * std::numbers::pi);
}

TEST(Primitives, AreClosedAndOutwardWound) {
  for (const auto& mesh : {shapes::icosphere(1.0, 2), shapes::box(Vec3(0.3, 0.5, 0.7), 3),
                           shapes::cylinder(0.4, 0.8, 32), shapes::capsule(0.3, 0.5, 32)}) {
    EXPECT_TRUE(is_watertight(mesh));
    EXPECT_GT(signed_volume(mesh), 0.0);
  }
  EXPECT_NEAR(signed_volume(shapes::box(Vec3(0.3, 0.5, 0.7), 3)), 8 * 0.3 * 0.5 * 0.7, 1e-12);
}

TEST(SdfDataset, ZeroNoiseKeepsSurfaceLabels) {
  const auto sphere = shapes::icosphere(1.0, 3);
  const auto data = generate_sdf_dataset(sphere, 200, 0, 0.0, 1);
  ASSERT_EQ(data.size(), 400u);
  for (const auto& s : data) EXPECT_EQ(s.s, 0.0);
}

TEST(SdfDataset, UniformInsideFractionMatchesVolumeRatio) {
  const auto sphere = shapes::icosphere(1.0, 4);
  const std::size_t n = 4000;
  const auto data = generate_sdf_dataset(sphere, 0, n, 0.05, 2);
  std::size_t inside = 0;
  for (const auto& s : data) inside += s.s < 0.0;
  const double p = (4.0 * std::numbers::pi / 3.0) / std::pow(2.2, 3);
  EXPECT_NEAR(p, 0.393, 1e-3);
  EXPECT_NEAR(static_cast<double>(inside) / n, p, 3.0 * std::sqrt(p * (1 - p) / n) + 0.005);
}

TEST(SdfDataset, LabelsMatchSignedDistanceAndAreBounded) {
  const auto mesh = shapes::box(Vec3(0.4, 0.6, 0.5));
  const auto data = generate_sdf_dataset(mesh, 100, 100, 0.05, 3);
  const double diameter = 2.0 * std::sqrt(3.0) * kSampleVolumeHalfWidth;
  for (const auto& s : data) {
    EXPECT_NEAR(s.s, shapes::box_sdf(s.x, Vec3(0.4, 0.6, 0.5)), 1e-9);
    EXPECT_LE(std::abs(s.s), diameter);
  }
}

TEST(SdfDataset, DeterministicFileBytes) {
  const auto mesh = shapes::capsule(0.3, 0.4, 16);
  std::ostringstream a, b;
  write_sdf_dataset(a, generate_sdf_dataset(mesh, 50, 50, 0.05, 42));
  write_sdf_dataset(b, generate_sdf_dataset(mesh, 50, 50, 0.05, 42));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().size(), 4 + 4 + 8 + 150 * 16u);
  EXPECT_EQ(a.str().substr(0, 4), "TSDF");

  std::istringstream in(a.str());
  const auto back = read_sdf_dataset(in);
  std::ostringstream c;
  write_sdf_dataset(c, back);
  EXPECT_EQ(c.str(), a.str());
}

TEST(SdfDataset, OpenMeshThrows) {
  const auto open = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").mesh;
  EXPECT_THROW(generate_sdf_dataset(open, 10, 10, 0.01, 0), NonWatertight);
}
