#pragma once

#include "pvcmc/common.hpp"
#include "pvcmc/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace pvcmc {

/// S = (|Z| + |Z^T|) / 2, assigned symmetrically so S(i,j) == S(j,i) bitwise.
template <typename Scalar>
MatrixX<Scalar> affinity_from_z(const MatrixX<Scalar>& z) {
  require(z.rows() == z.cols(), "affinity_from_z: Z must be square");
  for (Index i = 0; i < z.rows(); ++i)
    require(z(i, i) == Scalar(0), "affinity_from_z: Z diagonal must be zero");
  MatrixX<Scalar> s(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    s(i, i) = Scalar(0);
    for (Index j = i + 1; j < z.cols(); ++j) {
      const Scalar value = (std::abs(z(i, j)) + std::abs(z(j, i))) / Scalar(2);
      s(i, j) = value;
      s(j, i) = value;
    }
  }
  return s;
}

template <typename Scalar>
struct EigenPairs {
  VectorX<Scalar> values;   // ascending
  MatrixX<Scalar> vectors;  // columns aligned with values
};

/// K smallest eigenpairs of a symmetric matrix (dense solve), with the sign
/// of each vector fixed so its first nonzero component is positive.
template <typename Scalar>
EigenPairs<Scalar> eigensolve_symmetric(const MatrixX<Scalar>& m, int k) {
  require(m.rows() == m.cols() && m.rows() >= 1, "eigensolve_symmetric: matrix must be square");
  require(k >= 1 && k <= m.rows(), "eigensolve_symmetric: bad eigenpair count");
  const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > Scalar(1e-10))
    throw InvalidArgument("eigensolve_symmetric: asymmetry " + std::to_string(asym) +
                          " beyond tolerance");

  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(m);
  if (solver.info() != Eigen::Success)
    throw ComputeError("eigensolve_symmetric: eigensolver failed to converge");

  EigenPairs<Scalar> out;
  out.values = solver.eigenvalues().head(k);
  out.vectors = solver.eigenvectors().leftCols(k);
  for (Index j = 0; j < out.vectors.cols(); ++j) {
    for (Index i = 0; i < out.vectors.rows(); ++i) {
      if (std::abs(out.vectors(i, j)) > Scalar(1e-12)) {
        if (out.vectors(i, j) < Scalar(0)) out.vectors.col(j) = -out.vectors.col(j);
        break;
      }
    }
  }
  return out;
}

template <typename Scalar>
struct KMeansResult {
  IVec labels;
  Scalar inertia = Scalar(0);
};

namespace detail {

template <typename Scalar>
KMeansResult<Scalar> kmeans_single(const MatrixX<Scalar>& points, int k, Rng& rng,
                                   int max_iter, Scalar tol) {
  const Index n = points.rows();

  // k-means++ seeding.
  MatrixX<Scalar> centers(k, points.cols());
  std::vector<Index> chosen;
  chosen.push_back(static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n))));
  centers.row(0) = points.row(chosen.back());
  VectorX<Scalar> dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const Scalar total = dist2.sum();
    Index pick = -1;
    if (total > Scalar(0)) {
      const Scalar target = static_cast<Scalar>(rng.uniform()) * total;
      Scalar cumulative = Scalar(0);
      for (Index i = 0; i < n; ++i) {
        cumulative += dist2[i];
        if (cumulative >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    } else {
      // All points coincide with chosen centers; take the lowest fresh index.
      pick = 0;
      for (Index i = 0; i < n; ++i) {
        bool used = false;
        for (const Index ch : chosen) used = used || (ch == i);
        if (!used) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    centers.row(c) = points.row(pick);
    dist2 = dist2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  IVec labels = IVec::Zero(n);
  Scalar prev_inertia = std::numeric_limits<Scalar>::infinity();
  Scalar inertia = prev_inertia;
  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment step; ties go to the lower center index.
    inertia = Scalar(0);
    for (Index i = 0; i < n; ++i) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const Scalar d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      labels[i] = best_c;
      inertia += best;
    }
    if (inertia > prev_inertia * (Scalar(1) + Scalar(1e-12)) + Scalar(1e-30))
      throw ComputeError("kmeans: inertia increased across Lloyd iterations");
    const bool converged = prev_inertia - inertia < tol;
    prev_inertia = inertia;

    // Update step; an emptied cluster restarts at the worst-fit point.
    MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(k, points.cols());
    VectorX<Scalar> counts = VectorX<Scalar>::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += points.row(i);
      counts[labels[i]] += Scalar(1);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > Scalar(0)) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        Index worst = 0;
        Scalar worst_d = Scalar(-1);
        for (Index i = 0; i < n; ++i) {
          const Scalar d = (points.row(i) - centers.row(labels[i])).squaredNorm();
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        centers.row(c) = points.row(worst);
      }
    }
    if (converged) break;
  }
  return {labels, inertia};
}

}  // namespace detail

/// Restarted Lloyd iterations with k-means++ seeding; restart r draws from
/// seed + r, the best inertia wins and ties resolve to the lower restart.
template <typename Scalar>
KMeansResult<Scalar> kmeans(const MatrixX<Scalar>& points, int k, std::uint64_t seed,
                            int restarts = 50, int max_iter = 300, Scalar tol = Scalar(1e-9)) {
  require(k >= 1, "kmeans: k must be positive");
  require(points.rows() >= k, "kmeans: fewer points than clusters");
  require(restarts >= 1, "kmeans: need at least one restart");
  KMeansResult<Scalar> best;
  best.inertia = std::numeric_limits<Scalar>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(seed + static_cast<std::uint64_t>(r));
    KMeansResult<Scalar> candidate = detail::kmeans_single(points, k, rng, max_iter, tol);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

/// Normalized spectral clustering (symmetric Laplacian, Ng-Jordan-Weiss):
/// embed with the K bottom eigenvectors, row-normalize, k-means++.
template <typename Scalar>
IVec spectral_cluster(const MatrixX<Scalar>& affinity, int k, std::uint64_t seed) {
  require(k >= 2, "spectral_cluster: need at least two clusters");
  require(affinity.rows() == affinity.cols(), "spectral_cluster: affinity must be square");
  require(affinity.rows() >= k, "spectral_cluster: K exceeds sample count");

  const Index n = affinity.rows();
  VectorX<Scalar> inv_sqrt_degree(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar degree = std::max(affinity.row(i).sum(), Scalar(1e-12));
    inv_sqrt_degree[i] = Scalar(1) / std::sqrt(degree);
  }

  MatrixX<Scalar> laplacian(n, n);
  for (Index i = 0; i < n; ++i) {
    laplacian(i, i) = Scalar(1) - affinity(i, i) * inv_sqrt_degree[i] * inv_sqrt_degree[i];
    for (Index j = i + 1; j < n; ++j) {
      const Scalar value = -affinity(i, j) * inv_sqrt_degree[i] * inv_sqrt_degree[j];
      laplacian(i, j) = value;
      laplacian(j, i) = value;
    }
  }

  const EigenPairs<Scalar> pairs = eigensolve_symmetric(laplacian, k);
  MatrixX<Scalar> embedding = pairs.vectors;
  for (Index i = 0; i < n; ++i) {
    const Scalar norm = std::max(embedding.row(i).norm(), Scalar(1e-12));
    embedding.row(i) /= norm;
  }
  return kmeans(embedding, k, seed).labels;
}

}  // namespace pvcmc
