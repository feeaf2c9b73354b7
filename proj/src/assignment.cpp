#include "coconolab/assignment.hpp"

#include <cmath>
#include <limits>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

// Minimum-cost perfect matching on a dense square matrix with potentials.
// Returns row -> column.
std::vector<std::size_t> hungarian_min(const std::vector<double>& a, std::size_t n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Best trace over the rows [first, n) restricted to columns not in `taken`.
double best_completion(const CostMatrix& cost, std::size_t first, const std::vector<char>& taken) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < cost.n; ++j)
    if (!taken[j]) cols.push_back(j);
  const std::size_t m = cols.size();
  if (m == 0) return 0.0;
  std::vector<double> neg(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) neg[i * m + j] = -cost(first + i, cols[j]);
  const auto match = hungarian_min(neg, m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += cost(first + i, cols[match[i]]);
  return total;
}

}  // namespace

std::vector<int> AssignmentMatrix::matrix() const {
  const std::size_t n = perm.size();
  std::vector<int> m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + perm[i]] = 1;
  return m;
}

std::vector<std::size_t> AssignmentMatrix::inverse() const {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

CostMatrix cost_matrix(const SegmentSet& segments, const CrossAttentionStack& cross) {
  const std::size_t n = segments.n();
  require(n == cross.n(), ErrorCode::shape_mismatch,
          "segment count " + std::to_string(n) + " does not match cross map count " + std::to_string(cross.n()));
  CostMatrix c{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const Grid& seg = segments.values[i];
    for (std::size_t j = 0; j < n; ++j) {
      const Grid& map = cross.maps[j];
      require(seg.r == cross.r && map.cells() == seg.cells(), ErrorCode::shape_mismatch,
              "segment and cross map resolutions differ");
      double acc = 0.0;
      for (std::size_t c2 = 0; c2 < seg.cells(); ++c2) acc += seg[c2] * map[c2];
      c(i, j) = acc;
    }
  }
  return c;
}

double assignment_trace(const CostMatrix& cost, const AssignmentMatrix& assign) {
  double t = 0.0;
  for (std::size_t i = 0; i < assign.n(); ++i) t += cost(i, assign.perm[i]);
  return t;
}

CostMatrix assigned_cost(const CostMatrix& cost, const AssignmentMatrix& assign) {
  require(cost.n == assign.n(), ErrorCode::shape_mismatch, "assignment and cost sizes differ");
  CostMatrix m{cost.n, std::vector<double>(cost.n * cost.n)};
  for (std::size_t i = 0; i < cost.n; ++i)
    for (std::size_t k = 0; k < cost.n; ++k) m(i, k) = cost(i, assign.perm[k]);
  return m;
}

AssignmentMatrix optimal_assignment(const CostMatrix& cost) {
  const std::size_t n = cost.n;
  require(n >= 1, ErrorCode::invalid_argument, "empty cost matrix");
  require(cost.values.size() == n * n, ErrorCode::shape_mismatch, "cost matrix is not square");
  double scale = 1.0;
  for (double x : cost.values) {
    require(std::isfinite(x), ErrorCode::non_finite, "cost matrix entry is not finite");
    scale += std::abs(x);
  }

  std::vector<char> none(n, 0);
  const double optimum = best_completion(cost, 0, none);
  const double tol = 1e-12 * scale;

  // Fix rows in order, taking the smallest column that still admits an
  // optimal completion.
  AssignmentMatrix out;
  out.perm.resize(n);
  std::vector<char> taken(n, 0);
  double fixed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (std::size_t j = 0; j < n && !placed; ++j) {
      if (taken[j]) continue;
      taken[j] = 1;
      const double value = fixed + cost(i, j) + best_completion(cost, i + 1, taken);
      if (value >= optimum - tol) {
        out.perm[i] = j;
        fixed += cost(i, j);
        placed = true;
      } else {
        taken[j] = 0;
      }
    }
    require(placed, ErrorCode::convergence_failure, "assignment tie-break failed to place a row");
  }
  return out;
}

}  // namespace coconolab
