#pragma once

// Maximum-weight perfect matching on a square score matrix (Kuhn-Munkres with
// potentials, O(n^3)), with ties resolved to the lexicographically smallest
// permutation.

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "decrl/error.hpp"
#include "decrl/linalg.hpp"

namespace decrl {

namespace detail {

// Minimum-cost assignment over the active rows/columns; returns row -> column
// in terms of indices into the active lists.
inline std::vector<int> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return assignment;
}

inline double optimal_total(const Matrix& score) {
  if (score.rows() == 0) return 0.0;
  const auto a = min_cost_assignment(-score);
  double total = 0.0;
  for (Eigen::Index j = 0; j < score.rows(); ++j) total += score(j, a[static_cast<std::size_t>(j)]);
  return total;
}

inline Matrix drop(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
  return out;
}

}  // namespace detail

struct AlignmentResult {
  Matrix affinity;
  std::vector<int> permutation;  // row j is matched to column permutation[j]
  double total = 0.0;
};

inline bool is_permutation_of_range(const std::vector<int>& perm) {
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(perm.size()) || seen[static_cast<std::size_t>(p)]) return false;
    seen[static_cast<std::size_t>(p)] = 1;
  }
  return true;
}

inline AlignmentResult hungarian_match(const Matrix& affinity) {
  require(affinity.rows() == affinity.cols(), ErrorKind::shape, "hungarian_match: matrix must be square");
  require(affinity.allFinite(), ErrorKind::degenerate_input, "hungarian_match: non-finite affinity");
  const int n = static_cast<int>(affinity.rows());
  AlignmentResult result;
  result.affinity = affinity;
  if (n == 0) return result;

  const double best = detail::optimal_total(affinity);
  const double tol = 1e-12 * (1.0 + affinity.cwiseAbs().sum());

  // Fix rows in order, each to the smallest column that still admits an
  // optimal completion.
  std::vector<int> rows(static_cast<std::size_t>(n)), cols(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  double fixed = 0.0;
  result.permutation.assign(static_cast<std::size_t>(n), -1);
  for (int j = 0; j < n; ++j) {
    std::vector<int> rest_rows(rows.begin() + 1, rows.end());
    int chosen = -1;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      std::vector<int> rest_cols = cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(c));
      const double completion =
          rest_rows.empty() ? 0.0 : detail::optimal_total(detail::drop(affinity, rest_rows, rest_cols));
      if (fixed + affinity(j, cols[c]) + completion >= best - tol) {
        chosen = static_cast<int>(c);
        break;
      }
    }
    if (chosen < 0) chosen = 0;  // unreachable for finite input
    result.permutation[static_cast<std::size_t>(j)] = cols[static_cast<std::size_t>(chosen)];
    fixed += affinity(j, cols[static_cast<std::size_t>(chosen)]);
    cols.erase(cols.begin() + chosen);
    rows.erase(rows.begin());
  }
  for (int j = 0; j < n; ++j) result.total += affinity(j, result.permutation[static_cast<std::size_t>(j)]);
  return result;
}

}  // namespace decrl
