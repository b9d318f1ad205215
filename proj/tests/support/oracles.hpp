#pragma once

// Independent reference computations for the test suites. Everything here is
// deliberately written without touching the library's implementation paths:
// finite differences for gradients, cyclic Jacobi for eigenvalues, exhaustive
// permutation search for assignments.

#include "pvcmc/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace pvcmc::testing {

/// Central finite-difference gradient of a scalar function of one matrix,
/// perturbing entry by entry.
inline Mat finite_difference_gradient(const std::function<double(const Mat&)>& f, Mat at,
                                      double h = 1e-5) {
  Mat grad(at.rows(), at.cols());
  for (Index i = 0; i < at.rows(); ++i) {
    for (Index j = 0; j < at.cols(); ++j) {
      const double saved = at(i, j);
      at(i, j) = saved + h;
      const double plus = f(at);
      at(i, j) = saved - h;
      const double minus = f(at);
      at(i, j) = saved;
      grad(i, j) = (plus - minus) / (2.0 * h);
    }
  }
  return grad;
}

/// max_ij |a - b| / max(1, |a|, |b|)
inline double max_relative_error(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      const double denom = std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// ascending. Independent of Eigen's solver.
inline Vec jacobi_eigenvalues(Mat a, int max_sweeps = 100) {
  const Index n = a.rows();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Vec values = a.diagonal();
  std::sort(values.data(), values.data() + values.size());
  return values;
}

/// Exhaustive minimum assignment cost over all permutations (m <= 9).
inline double brute_force_assignment_cost(const Mat& cost) {
  const int m = static_cast<int>(cost.rows());
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < m; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Exhaustive best-relabeling accuracy: the maximum fraction of agreements
/// over all injective maps from predicted to true label values (padded to a
/// common label set).
inline double brute_force_best_accuracy(const Eigen::VectorXi& y, const Eigen::VectorXi& l) {
  const int k = std::max(y.maxCoeff(), l.maxCoeff()) + 1;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    int hits = 0;
    for (Index i = 0; i < y.size(); ++i)
      if (perm[static_cast<std::size_t>(l[i])] == y[i]) ++hits;
    best = std::max(best, static_cast<double>(hits) / static_cast<double>(y.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Plug-in NMI from scratch: joint counts, entropies, natural logs.
inline double reference_nmi(const Eigen::VectorXi& y, const Eigen::VectorXi& l) {
  const int ky = y.maxCoeff() + 1;
  const int kl = l.maxCoeff() + 1;
  const double n = static_cast<double>(y.size());
  std::vector<std::vector<double>> joint(static_cast<std::size_t>(ky),
                                         std::vector<double>(static_cast<std::size_t>(kl), 0.0));
  std::vector<double> py(static_cast<std::size_t>(ky), 0.0), pl(static_cast<std::size_t>(kl), 0.0);
  for (Index i = 0; i < y.size(); ++i) {
    joint[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(l[i])] += 1.0 / n;
    py[static_cast<std::size_t>(y[i])] += 1.0 / n;
    pl[static_cast<std::size_t>(l[i])] += 1.0 / n;
  }
  double mi = 0.0, hy = 0.0, hl = 0.0;
  for (int a = 0; a < ky; ++a)
    for (int b = 0; b < kl; ++b)
      if (joint[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] > 0.0)
        mi += joint[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
              std::log(joint[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] /
                       (py[static_cast<std::size_t>(a)] * pl[static_cast<std::size_t>(b)]));
  for (int a = 0; a < ky; ++a)
    if (py[static_cast<std::size_t>(a)] > 0.0)
      hy -= py[static_cast<std::size_t>(a)] * std::log(py[static_cast<std::size_t>(a)]);
  for (int b = 0; b < kl; ++b)
    if (pl[static_cast<std::size_t>(b)] > 0.0)
      hl -= pl[static_cast<std::size_t>(b)] * std::log(pl[static_cast<std::size_t>(b)]);
  const double hmax = std::max(hy, hl);
  return hmax <= 0.0 ? 0.0 : mi / hmax;
}

}  // namespace pvcmc::testing
