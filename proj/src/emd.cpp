#include <algorithm>
#include <cmath>
#include <limits>

#include "touchsdf/metrics.hpp"

namespace touchsdf::metrics {

namespace {

double assignment_cost(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                       const std::vector<std::size_t>& assign) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[assign[i]]).norm();
  return total;
}

void check_sizes(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw EmptyCloud("emd needs two non-empty clouds");
  if (a.size() != b.size()) throw SizeMismatch("emd needs equal-size clouds");
}

}  // namespace

EmdResult emd_exact(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  check_sizes(a, b);
  const std::size_t n = a.size();
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials; rows/cols 1-based, 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (a[i0 - 1] - b[j - 1]).norm() - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  EmdResult r;
  r.assignment.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) r.assignment[match[j] - 1] = j - 1;
  r.value = assignment_cost(a, b, r.assignment) / static_cast<double>(n);
  r.exact = true;
  r.gap_bound = 0.0;
  return r;
}

EmdResult emd_auction(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double relative_gap) {
  check_sizes(a, b);
  const std::size_t n = a.size();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<float> cost(n * n);
  double max_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = (a[i] - b[j]).norm();
      cost[i * n + j] = static_cast<float>(c);
      max_cost = std::max(max_cost, c);
    }
  }

  // Maximize benefit -cost. price[j] is what bidders pay for target j.
  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n, kNone), assigned(n, kNone);
  std::vector<std::size_t> best_assignment;
  double best_primal = std::numeric_limits<double>::infinity();
  double best_dual = -std::numeric_limits<double>::infinity();

  double eps = std::max(max_cost, 1e-12) / 4.0;
  const double eps_floor = std::max(max_cost, 1e-12) * 1e-9;
  std::vector<std::size_t> queue;
  while (true) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::fill(assigned.begin(), assigned.end(), kNone);
    queue.resize(n);
    for (std::size_t i = 0; i < n; ++i) queue[i] = n - 1 - i;
    while (!queue.empty()) {
      const std::size_t i = queue.back();
      queue.pop_back();
      const float* row = &cost[i * n];
      double v1 = -std::numeric_limits<double>::infinity();
      double v2 = v1;
      std::size_t j1 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double value = -static_cast<double>(row[j]) - price[j];
        if (value > v1) {
          v2 = v1;
          v1 = value;
          j1 = j;
        } else if (value > v2) {
          v2 = value;
        }
      }
      if (n == 1) v2 = v1;
      price[j1] += (v1 - v2) + eps;
      if (owner[j1] != kNone) {
        assigned[owner[j1]] = kNone;
        queue.push_back(owner[j1]);
      }
      owner[j1] = i;
      assigned[i] = j1;
    }

    // Weak duality in benefit form: min cost >= -(sum_i profit_i + sum_j price_j)
    // with profit_i = max_j (-cost_ij - price_j).
    const double primal = assignment_cost(a, b, assigned);
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double profit = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) profit = std::max(profit, -(a[i] - b[j]).norm() - price[j]);
      dual += profit;
    }
    for (double p : price) dual += p;
    const double lower = -dual;
    if (primal < best_primal) {
      best_primal = primal;
      best_assignment = assigned;
    }
    best_dual = std::max(best_dual, lower);
    if (best_primal - best_dual <= relative_gap * best_primal || eps <= eps_floor) break;
    eps /= 5.0;
  }

  EmdResult r;
  r.assignment = std::move(best_assignment);
  r.value = best_primal / static_cast<double>(n);
  r.exact = false;
  r.gap_bound = std::max(0.0, best_primal - best_dual) / static_cast<double>(n);
  return r;
}

}  // namespace touchsdf::metrics
