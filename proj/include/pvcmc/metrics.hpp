#pragma once

#include "pvcmc/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace pvcmc {

/// Joint label counts; rows index true classes, columns predicted clusters.
struct ContingencyTable {
  Eigen::MatrixXi counts;  // K_true x K_pred
  Index n = 0;
};

namespace detail {

/// Remap arbitrary integer labels to dense 0..K-1 (ascending value order).
inline std::vector<int> dense_relabel(const Eigen::VectorXi& labels, int& k_out) {
  std::map<int, int> ids;
  for (Index i = 0; i < labels.size(); ++i) ids.emplace(labels[i], 0);
  int next = 0;
  for (auto& kv : ids) kv.second = next++;
  std::vector<int> out(static_cast<std::size_t>(labels.size()));
  for (Index i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(i)] = ids[labels[i]];
  k_out = next;
  return out;
}

/// Kuhn augmenting path over an adjacency list; used for feasibility checks.
inline bool try_augment(int row, const std::vector<std::vector<int>>& adj,
                        std::vector<int>& match_col, std::vector<char>& visited) {
  for (int col : adj[static_cast<std::size_t>(row)]) {
    if (visited[static_cast<std::size_t>(col)]) continue;
    visited[static_cast<std::size_t>(col)] = 1;
    if (match_col[static_cast<std::size_t>(col)] < 0 ||
        try_augment(match_col[static_cast<std::size_t>(col)], adj, match_col, visited)) {
      match_col[static_cast<std::size_t>(col)] = row;
      return true;
    }
  }
  return false;
}

inline bool has_perfect_matching(const std::vector<std::vector<int>>& adj, int n_rows, int n_cols) {
  std::vector<int> match_col(static_cast<std::size_t>(n_cols), -1);
  int matched = 0;
  for (int r = 0; r < n_rows; ++r) {
    std::vector<char> visited(static_cast<std::size_t>(n_cols), 0);
    if (try_augment(r, adj, match_col, visited)) ++matched;
  }
  return matched == n_rows;
}

}  // namespace detail

struct Assignment {
  std::vector<int> row_to_col;  // permutation over the (zero-padded) square
  double total_cost = 0.0;
};

/// Minimum-cost linear assignment (Kuhn-Munkres with dual potentials).
///
/// Rectangular inputs are zero-padded to square. Among all optimal
/// assignments the lexicographically smallest row_to_col is returned,
/// selected greedily over the tight-edge graph of the optimal duals.
template <typename Scalar>
Assignment hungarian(const MatrixX<Scalar>& cost) {
  require(cost.rows() >= 1 && cost.cols() >= 1, "hungarian: empty cost matrix");
  if (!cost.allFinite()) throw InvalidArgument("hungarian: cost matrix has NaN/Inf entries");

  const int m = static_cast<int>(std::max(cost.rows(), cost.cols()));
  MatrixX<double> a = MatrixX<double>::Zero(m, m);
  a.topLeftCorner(cost.rows(), cost.cols()) = cost.template cast<double>();

  // Shortest augmenting path formulation; 1-based with a virtual column 0.
  std::vector<double> u(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= m; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  // Complementary slackness: every optimal assignment lives on tight edges.
  const double tol = 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff());
  std::vector<std::vector<int>> tight(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (std::abs(a(i, j) - u[static_cast<std::size_t>(i) + 1] - v[static_cast<std::size_t>(j) + 1]) <= tol)
        tight[static_cast<std::size_t>(i)].push_back(j);

  // Fix rows in order to the smallest column keeping the rest matchable.
  Assignment result;
  result.row_to_col.assign(static_cast<std::size_t>(m), -1);
  std::vector<char> col_taken(static_cast<std::size_t>(m), 0);
  for (int i = 0; i < m; ++i) {
    bool fixed = false;
    for (int j : tight[static_cast<std::size_t>(i)]) {
      if (col_taken[static_cast<std::size_t>(j)]) continue;
      std::vector<std::vector<int>> rest;
      rest.reserve(static_cast<std::size_t>(m - i - 1));
      for (int r = i + 1; r < m; ++r) {
        std::vector<int> cols;
        for (int c : tight[static_cast<std::size_t>(r)])
          if (!col_taken[static_cast<std::size_t>(c)] && c != j) cols.push_back(c);
        rest.push_back(std::move(cols));
      }
      if (detail::has_perfect_matching(rest, m - i - 1, m)) {
        result.row_to_col[static_cast<std::size_t>(i)] = j;
        col_taken[static_cast<std::size_t>(j)] = 1;
        fixed = true;
        break;
      }
    }
    if (!fixed) throw ComputeError("hungarian: tight-edge graph lost feasibility");
  }
  for (int i = 0; i < m; ++i) result.total_cost += a(i, result.row_to_col[static_cast<std::size_t>(i)]);
  return result;
}

inline ContingencyTable contingency_table(const Eigen::VectorXi& y, const Eigen::VectorXi& l) {
  require(y.size() == l.size(), "contingency_table: label vectors differ in length");
  require(y.size() >= 1, "contingency_table: empty labels");
  int ky = 0, kl = 0;
  const auto yd = detail::dense_relabel(y, ky);
  const auto ld = detail::dense_relabel(l, kl);
  ContingencyTable table;
  table.counts = Eigen::MatrixXi::Zero(ky, kl);
  table.n = y.size();
  for (Index i = 0; i < y.size(); ++i)
    table.counts(yd[static_cast<std::size_t>(i)], ld[static_cast<std::size_t>(i)]) += 1;
  return table;
}

/// Clustering accuracy after optimal cluster-to-class matching.
inline double acc(const Eigen::VectorXi& y, const Eigen::VectorXi& l) {
  const ContingencyTable table = contingency_table(y, l);
  // Maximize matches == minimize negated counts.
  MatrixX<double> cost = -table.counts.cast<double>();
  const Assignment assignment = hungarian(cost);
  return -assignment.total_cost / static_cast<double>(table.n);
}

/// Normalized mutual information, I(y;l)/max{H(y), H(l)} with natural logs.
inline double nmi(const Eigen::VectorXi& y, const Eigen::VectorXi& l) {
  const ContingencyTable table = contingency_table(y, l);
  const double n = static_cast<double>(table.n);
  const Eigen::VectorXd row_sums = table.counts.cast<double>().rowwise().sum();
  const Eigen::VectorXd col_sums = table.counts.cast<double>().colwise().sum().transpose();

  double h_y = 0.0, h_l = 0.0, mi = 0.0;
  for (Index i = 0; i < row_sums.size(); ++i)
    if (row_sums[i] > 0) h_y -= row_sums[i] / n * std::log(row_sums[i] / n);
  for (Index j = 0; j < col_sums.size(); ++j)
    if (col_sums[j] > 0) h_l -= col_sums[j] / n * std::log(col_sums[j] / n);
  for (Index i = 0; i < table.counts.rows(); ++i) {
    for (Index j = 0; j < table.counts.cols(); ++j) {
      const double nij = table.counts(i, j);
      if (nij > 0) mi += nij / n * std::log(n * nij / (row_sums[i] * col_sums[j]));
    }
  }
  const double h_max = std::max(h_y, h_l);
  if (h_max <= 0.0) return 0.0;  // both partitions constant
  return mi / h_max;
}

}  // namespace pvcmc
