#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "touchsdf/metrics.hpp"
#include "touchsdf/primitives.hpp"
#include "touchsdf/rng.hpp"

using namespace touchsdf;
using namespace touchsdf::metrics;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, std::uint64_t seed, double spread = 1.0) {
  Rng rng(seed);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(rng.normal(), rng.normal(), rng.normal()) * spread;
  return out;
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto side = [](const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
    double total = 0.0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) best = std::min(best, (x - y).squaredNorm());
      total += best;
    }
    return total / p.size();
  };
  return side(a, b) + side(b, a);
}

double brute_emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[perm[i]]).norm();
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / a.size();
}

std::vector<Vec3> rigid(const std::vector<Vec3>& pts) {
  const Mat3 r = Eigen::AngleAxisd(1.1, Vec3(0.2, -0.5, 0.8).normalized()).toRotationMatrix();
  std::vector<Vec3> out;
  for (const auto& p : pts) out.push_back(r * p + Vec3(3, -2, 0.5));
  return out;
}

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return c / pts.size();
}

}  // namespace

TEST(Chamfer, HandCases) {
  const std::vector<Vec3> a{Vec3(0, 0, 0)}, b{Vec3(1, 0, 0)};
  EXPECT_EQ(chamfer(a, b), 2.0);
  const auto c = random_cloud(50, 1);
  EXPECT_EQ(chamfer(c, c), 0.0);
  EXPECT_THROW(chamfer(std::vector<Vec3>{}, a), EmptyCloud);
}

TEST(Chamfer, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_cloud(8, seed), b = random_cloud(8, seed + 100);
    EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-12);
  }
  const auto a = random_cloud(300, 5), b = random_cloud(250, 6);
  EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-12);
}

TEST(Chamfer, SymmetricAndRigidInvariant) {
  const auto a = random_cloud(200, 7), b = random_cloud(150, 8);
  EXPECT_NEAR(chamfer(a, b), chamfer(b, a), 1e-12);
  EXPECT_NEAR(chamfer(rigid(a), rigid(b)), chamfer(a, b), 1e-9);
}

TEST(Emd, HandCases) {
  const auto c = random_cloud(40, 2);
  EXPECT_EQ(emd(c, c).value, 0.0);
  const std::vector<Vec3> a{Vec3(0, 0, 0)}, b{Vec3(0, 3, 4)};
  EXPECT_NEAR(emd(a, b).value, 5.0, 1e-15);
  EXPECT_THROW(emd(a, c), SizeMismatch);
  EXPECT_THROW(emd(std::vector<Vec3>{}, std::vector<Vec3>{}), EmptyCloud);
}

TEST(Emd, ExactMatchesFactorialBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_cloud(8, seed), b = random_cloud(8, seed + 50);
    const double oracle = brute_emd(a, b);
    const auto exact = emd(a, b);
    EXPECT_TRUE(exact.exact);
    EXPECT_NEAR(exact.value, oracle, 1e-12);
    const auto auction = emd_auction(a, b);
    EXPECT_FALSE(auction.exact);
    EXPECT_GE(auction.value, oracle - 1e-12);
    EXPECT_LE(auction.value, oracle + auction.gap_bound + 1e-12);
    EXPECT_LE(auction.gap_bound, kEmdGapCertificate * auction.value + 1e-12);
  }
}

TEST(Emd, AssignmentIsABijectionAndReproducesValue) {
  const auto a = random_cloud(200, 3), b = random_cloud(200, 4);
  const auto r = emd(a, b);
  std::vector<std::size_t> sorted = r.assignment;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[r.assignment[i]]).norm();
  EXPECT_NEAR(total / a.size(), r.value, 1e-12);
}

TEST(Emd, SymmetricRigidInvariantAndJensenBounded) {
  for (std::size_t n : {5u, 64u, 300u}) {
    const auto a = random_cloud(n, n), b = random_cloud(n, n + 1, 0.7);
    const double ab = emd(a, b).value;
    EXPECT_NEAR(ab, emd(b, a).value, 1e-12);
    EXPECT_NEAR(emd(rigid(a), rigid(b)).value, ab, 1e-9);
    EXPECT_GE(ab, (centroid(a) - centroid(b)).norm() - 1e-12);
  }
}

TEST(Emd, AuctionAgreesWithExactOnMidSizeSets) {
  const auto a = random_cloud(400, 9), b = random_cloud(400, 10, 1.2);
  const double exact = emd_exact(a, b).value;
  const auto approx = emd_auction(a, b);
  EXPECT_GE(approx.value, exact - 1e-9);
  EXPECT_LE(approx.value, exact * (1.0 + kEmdGapCertificate) + 1e-9);
  EXPECT_LE(approx.value - approx.gap_bound, exact + 1e-9);
}

TEST(Emd, LargeSetsUseCertifiedAuction) {
  const auto a = random_cloud(1024, 11), b = random_cloud(1024, 12);
  const auto r = emd(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_LE(r.gap_bound, kEmdGapCertificate * r.value);
  EXPECT_GE(r.value, (centroid(a) - centroid(b)).norm());
}

TEST(SurfaceError, Formula) {
  EXPECT_NEAR(surface_error(1.36, 1.0), 36.0, 1e-12);
  EXPECT_EQ(surface_error(0.5, 1.0), 50.0);
  EXPECT_THROW(surface_error(1.0, 0.0), ZeroGtArea);
  const auto s = shapes::icosphere(1.0, 2);
  EXPECT_EQ(surface_error(s, s), 0.0);
  auto bigger = s;
  for (auto& v : bigger.vertices) v *= std::sqrt(1.36);
  EXPECT_NEAR(surface_error(bigger, s), 36.0, 1e-9);
}

TEST(Evaluate, SelfComparisonBelowNoiseFloor) {
  const auto s = shapes::capsule(0.3, 0.5, 32);
  const auto r = evaluate(s, s, 4096, 3);
  EXPECT_LT(r.cd, 1e-3);
  EXPECT_LT(r.emd, 0.05);
  EXPECT_EQ(r.surface_error_pct, 0.0);
  EXPECT_EQ(r.n_points, 4096u);
}

TEST(Evaluate, SphereVsCubeFiniteAndDeterministic) {
  const auto sphere = shapes::icosphere(0.8, 3);
  const auto cube = shapes::box(Vec3(0.5, 0.5, 0.5), 2);
  const auto a = evaluate(sphere, cube, 600, 1);
  const auto b = evaluate(sphere, cube, 600, 1);
  for (double v : {a.cd, a.emd, a.surface_error_pct}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(a.cd, b.cd);
  EXPECT_EQ(a.emd, b.emd);
  EXPECT_FALSE(a.emd_exact);
}

TEST(Csv, RoundTrip) {
  std::ostringstream out;
  write_csv_header(out);
  ReportRow row{"sphere_003", 20, 7, ReconstructionReport{0.0061, 0.0123456789, 36.5, 4096, 7, false}};
  write_csv_row(out, row);
  row.shape_id = "box_001";
  row.report.emd_exact = true;
  write_csv_row(out, row);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "shape_id,touches,seed,cd,emd,surface_error_pct,emd_exactness");
  EXPECT_NE(text.find("sphere_003,20,7,0.0061,0.0123456789,36.5,approx"), std::string::npos);
  std::istringstream in(text);
  const auto rows = read_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].shape_id, "sphere_003");
  EXPECT_EQ(rows[0].touches, 20u);
  EXPECT_DOUBLE_EQ(rows[0].report.emd, 0.0123456789);
  EXPECT_FALSE(rows[0].report.emd_exact);
  EXPECT_TRUE(rows[1].report.emd_exact);
}
