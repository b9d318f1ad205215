#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace pvcmc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Mat = MatrixX<double>;
using Vec = VectorX<double>;
using RowVec = RowVectorX<double>;
using IVec = Eigen::VectorXi;
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Contract violation on caller-provided inputs.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Failure detected while computing (divergence, I/O, non-finite values).
struct ComputeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw ComputeError(what + ": non-finite values encountered");
}

}  // namespace pvcmc
