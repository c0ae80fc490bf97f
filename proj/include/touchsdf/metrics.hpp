#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "touchsdf/geometry.hpp"

namespace touchsdf::metrics {

// Point count at or below which emd() solves the assignment exactly.
inline constexpr std::size_t kExactEmdLimit = 512;
// Relative duality gap the auction solver certifies above that size.
inline constexpr double kEmdGapCertificate = 0.01;

// Symmetric squared-distance Chamfer distance:
//   mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double chamfer(const PointCloud& a, const PointCloud& b);

// Index of the nearest point of `to` for every point of `from`.
std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

struct EmdResult {
  double value = 0.0;      // mean matched distance
  bool exact = true;
  double gap_bound = 0.0;  // certified upper bound on value - optimum
  std::vector<std::size_t> assignment;  // a[i] is matched to b[assignment[i]]
};

// Earth mover's distance between equal-size sets: mean Euclidean distance under
// the optimal bijection. Exact up to kExactEmdLimit points, auction above.
EmdResult emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
EmdResult emd(const PointCloud& a, const PointCloud& b);
// Exact Hungarian (shortest augmenting path) solver.
EmdResult emd_exact(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
// Epsilon-scaling auction; stops once the dual bound certifies value within
// `relative_gap` of the optimum.
EmdResult emd_auction(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                      double relative_gap = kEmdGapCertificate);

// |S_pred - S_gt| / S_gt * 100
double surface_error(const TriangleMesh& pred, const TriangleMesh& gt);
double surface_error(double pred_area, double gt_area);

struct ReconstructionReport {
  double cd = 0.0;
  double emd = 0.0;
  double surface_error_pct = 0.0;
  std::size_t n_points = 0;
  std::uint64_t seed = 0;
  bool emd_exact = true;
};

ReconstructionReport evaluate(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_points = 4096,
                              std::uint64_t seed = 0);

struct ReportRow {
  std::string shape_id;
  std::size_t touches = 0;
  std::uint64_t seed = 0;
  ReconstructionReport report;
};

// shape_id,touches,seed,cd,emd,surface_error_pct,emd_exactness
void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const ReportRow& row);
std::vector<ReportRow> read_csv(std::istream& in);

}  // namespace touchsdf::metrics
