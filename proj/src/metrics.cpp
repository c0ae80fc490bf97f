#include "touchsdf/metrics.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "touchsdf/rng.hpp"

namespace touchsdf::metrics {

std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  if (from.empty() || to.empty()) throw EmptyCloud("nearest neighbour query on an empty cloud");
  std::vector<std::size_t> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = (from[i] - to[j]).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

namespace {

double directed_mean(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  double total = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw EmptyCloud("chamfer needs two non-empty clouds");
  return directed_mean(a, b) + directed_mean(b, a);
}

double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer(a.points, b.points); }

EmdResult emd(const PointCloud& a, const PointCloud& b) { return emd(a.points, b.points); }

EmdResult emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw EmptyCloud("emd needs two non-empty clouds");
  if (a.size() != b.size()) throw SizeMismatch("emd needs equal-size clouds");
  return a.size() <= kExactEmdLimit ? emd_exact(a, b) : emd_auction(a, b);
}

double surface_error(double pred_area, double gt_area) {
  if (!(gt_area > 0.0)) throw ZeroGtArea("ground-truth surface area is zero");
  return std::abs(pred_area - gt_area) / gt_area * 100.0;
}

double surface_error(const TriangleMesh& pred, const TriangleMesh& gt) {
  return surface_error(surface_area(pred), surface_area(gt));
}

ReconstructionReport evaluate(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_points,
                              std::uint64_t seed) {
  if (pred.empty() || gt.empty()) throw EmptyCloud("evaluate needs non-empty meshes");
  const PointCloud pa = sample_surface(pred, n_points, mix_seed(seed, 11));
  const PointCloud pb = sample_surface(gt, n_points, mix_seed(seed, 12));
  ReconstructionReport r;
  r.cd = chamfer(pa, pb);
  const auto e = emd(pa, pb);
  r.emd = e.value;
  r.emd_exact = e.exact;
  r.surface_error_pct = surface_error(pred, gt);
  r.n_points = n_points;
  r.seed = seed;
  return r;
}

void write_csv_header(std::ostream& out) {
  out << "shape_id,touches,seed,cd,emd,surface_error_pct,emd_exactness\n";
}

void write_csv_row(std::ostream& out, const ReportRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%.9g,%.9g,%.9g,%s\n", row.shape_id.c_str(), row.touches,
                static_cast<unsigned long long>(row.seed), row.report.cd, row.report.emd,
                row.report.surface_error_pct, row.report.emd_exact ? "exact" : "approx");
  out << buf;
}

std::vector<ReportRow> read_csv(std::istream& in) {
  std::vector<ReportRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ParseError("report row needs 7 columns: " + line);
    ReportRow r;
    r.shape_id = cells[0];
    r.touches = std::stoul(cells[1]);
    r.seed = std::stoull(cells[2]);
    r.report.cd = std::stod(cells[3]);
    r.report.emd = std::stod(cells[4]);
    r.report.surface_error_pct = std::stod(cells[5]);
    r.report.emd_exact = cells[6] == "exact";
    r.report.seed = r.seed;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace touchsdf::metrics
