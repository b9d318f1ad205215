#include "pvcmc/autodiff.hpp"
#include "pvcmc/rng.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace pvcmc;
using ad::Tape;
using ad::Var;

namespace {

Mat fd_of(const std::function<double(const Mat&)>& f, const Mat& at) {
  return testing::finite_difference_gradient(f, at);
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("sum of a leaf gives all-ones gradient") {
  Tape<double> t;
  Var w = t.input(Mat::Constant(3, 2, 1.5));
  t.backward(t.sum(w));
  CHECK(t.grad(w).isApprox(Mat::Ones(3, 2)));
}

TEST_CASE("sum_squares gradient is 2x") {
  Rng rng(5);
  const Mat x0 = rng.normal_matrix(4, 3);
  Tape<double> t;
  Var x = t.input(x0);
  t.backward(t.sum_squares(x));
  CHECK(t.grad(x).isApprox(2.0 * x0, 1e-12));
}

TEST_CASE("untouched leaves keep zero gradients") {
  Tape<double> t;
  Var used = t.input(Mat::Ones(2, 2));
  Var unused = t.input(Mat::Ones(2, 2));
  t.backward(t.sum(used));
  CHECK(t.grad(unused).isZero());
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> t;
  Var x = t.input(Mat::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(t.add(x, x)), InvalidArgument);
}

TEST_CASE("non-finite forward values are rejected") {
  Tape<double> t;
  Var x = t.input(Mat::Constant(1, 1, 1e308));
  CHECK_THROWS_AS(t.hadamard(t.scale(x, 10.0), t.scale(x, 10.0)), ComputeError);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(7);
  const Mat a0 = rng.normal_matrix(3, 4);
  const Mat b0 = rng.normal_matrix(4, 2);

  Tape<double> t;
  Var a = t.input(a0);
  Var b = t.input(b0);
  t.backward(t.sum_squares(t.matmul(a, b)));

  const auto f_a = [&](const Mat& m) { return (m * b0).squaredNorm(); };
  const auto f_b = [&](const Mat& m) { return (a0 * m).squaredNorm(); };
  CHECK(testing::max_relative_error(t.grad(a), fd_of(f_a, a0)) < 1e-6);
  CHECK(testing::max_relative_error(t.grad(b), fd_of(f_b, b0)) < 1e-6);
}

TEST_CASE("matmul_bt equals matmul with explicit transpose") {
  Rng rng(9);
  const Mat a0 = rng.normal_matrix(3, 5);
  const Mat b0 = rng.normal_matrix(4, 5);
  Tape<double> t;
  Var a = t.input(a0);
  Var b = t.input(b0);
  Var c = t.matmul_bt(a, b);
  CHECK(t.value(c).isApprox(a0 * b0.transpose(), 1e-14));
  t.backward(t.sum_squares(c));
  const auto f_a = [&](const Mat& m) { return (m * b0.transpose()).squaredNorm(); };
  CHECK(testing::max_relative_error(t.grad(a), fd_of(f_a, a0)) < 1e-6);
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(13);
  const Mat x0 = rng.normal_matrix(4, 4);
  const Mat w0 = rng.normal_matrix(4, 4);

  SUBCASE("hadamard + scale + add") {
    Tape<double> t;
    Var x = t.input(x0);
    Var w = t.input(w0);
    t.backward(t.sum(t.add(t.scale(t.hadamard(x, w), 0.5), x)));
    const auto f = [&](const Mat& m) { return (0.5 * m.cwiseProduct(w0) + m).sum(); };
    CHECK(testing::max_relative_error(t.grad(x), fd_of(f, x0)) < 1e-6);
  }

  SUBCASE("relu") {
    Tape<double> t;
    Var x = t.input(x0);
    t.backward(t.sum_squares(t.relu(x)));
    const auto f = [&](const Mat& m) { return m.cwiseMax(0.0).squaredNorm(); };
    CHECK(testing::max_relative_error(t.grad(x), fd_of(f, x0)) < 1e-6);
  }

  SUBCASE("mul_const") {
    Tape<double> t;
    Var x = t.input(x0);
    t.backward(t.sum(t.mul_const(x, w0)));
    CHECK(t.grad(x).isApprox(w0, 1e-12));
  }

  SUBCASE("log_clamped away from the clamp") {
    const Mat p0 = rng.uniform_matrix<double>(3, 3, 0.1, 2.0);
    Tape<double> t;
    Var p = t.input(p0);
    t.backward(t.sum(t.log_clamped(p, 1e-12)));
    const auto f = [&](const Mat& m) { return m.cwiseMax(1e-12).array().log().sum(); };
    CHECK(testing::max_relative_error(t.grad(p), fd_of(f, p0)) < 1e-6);
  }
}

TEST_CASE("log_clamped zeroes the gradient below the clamp") {
  Mat p0(1, 2);
  p0 << 0.5, 1e-20;
  Tape<double> t;
  Var p = t.input(p0);
  t.backward(t.sum(t.log_clamped(p, 1e-12)));
  CHECK(t.grad(p)(0, 0) == doctest::Approx(2.0));
  CHECK(t.grad(p)(0, 1) == 0.0);
}

TEST_CASE("add_rowvec broadcasts and accumulates bias gradient") {
  Rng rng(17);
  const Mat x0 = rng.normal_matrix(5, 3);
  const Mat b0 = rng.normal_matrix(1, 3);
  Tape<double> t;
  Var x = t.input(x0);
  Var b = t.input(b0);
  t.backward(t.sum_squares(t.add_rowvec(x, b)));
  const auto f_b = [&](const Mat& m) {
    return Mat(x0.rowwise() + m.row(0)).squaredNorm();
  };
  CHECK(testing::max_relative_error(t.grad(b), fd_of(f_b, b0)) < 1e-6);
}

TEST_CASE("row_softmax rows sum to one and are shift invariant") {
  Rng rng(19);
  const Mat x0 = rng.normal_matrix(6, 4);
  Tape<double> t;
  Var y = t.row_softmax(t.input(x0));
  for (Index i = 0; i < 6; ++i)
    CHECK(t.value(y).row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));

  Tape<double> t2;
  const Mat shifted = x0.colwise() + Vec::Constant(6, 3.7);
  Var y2 = t2.row_softmax(t2.input(shifted));
  CHECK((t.value(y) - t2.value(y2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("row_softmax gradient matches finite differences") {
  Rng rng(29);
  const Mat x0 = rng.normal_matrix(3, 4);
  const Mat w0 = rng.normal_matrix(3, 4);
  Tape<double> t;
  Var x = t.input(x0);
  t.backward(t.sum(t.mul_const(t.row_softmax(x), w0)));
  const auto f = [&](const Mat& m) {
    Mat sm(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
      const Vec e = (m.row(i).array() - m.row(i).maxCoeff()).exp();
      sm.row(i) = e.transpose() / e.sum();
    }
    return sm.cwiseProduct(w0).sum();
  };
  CHECK(testing::max_relative_error(t.grad(x), fd_of(f, x0)) < 1e-6);
}

TEST_CASE("row_l2_normalize produces unit rows; gradient checks out") {
  Rng rng(31);
  const Mat x0 = rng.normal_matrix(4, 3);
  const Mat w0 = rng.normal_matrix(4, 3);
  Tape<double> t;
  Var x = t.input(x0);
  Var y = t.row_l2_normalize(x);
  for (Index i = 0; i < 4; ++i)
    CHECK(t.value(y).row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
  t.backward(t.sum(t.mul_const(y, w0)));
  const auto f = [&](const Mat& m) {
    double s = 0.0;
    for (Index i = 0; i < m.rows(); ++i) s += m.row(i).dot(w0.row(i)) / m.row(i).norm();
    return s;
  };
  CHECK(testing::max_relative_error(t.grad(x), fd_of(f, x0)) < 1e-6);
}

TEST_CASE("row_l2_normalize reports the zero row") {
  Mat x0 = Mat::Ones(3, 2);
  x0.row(1).setZero();
  Tape<double> t;
  Var x = t.input(x0);
  CHECK_THROWS_WITH_AS(t.row_l2_normalize(x), doctest::Contains("row 1"), InvalidArgument);
}

TEST_CASE("col_norm_sum value and gradient") {
  Rng rng(37);
  const Mat x0 = rng.normal_matrix(4, 3);
  Tape<double> t;
  Var x = t.input(x0);
  Var s = t.col_norm_sum(x);
  double expected = 0.0;
  for (Index j = 0; j < 3; ++j) expected += x0.col(j).norm();
  CHECK(t.scalar(s) == doctest::Approx(expected).epsilon(1e-12));
  t.backward(s);
  const auto f = [&](const Mat& m) {
    double v = 0.0;
    for (Index j = 0; j < m.cols(); ++j) v += m.col(j).norm();
    return v;
  };
  CHECK(testing::max_relative_error(t.grad(x), fd_of(f, x0)) < 1e-6);
}

TEST_CASE("col_norm_sum subgradient at a zero column is zero") {
  Mat x0 = Mat::Ones(3, 2);
  x0.col(1).setZero();
  Tape<double> t;
  Var x = t.input(x0);
  t.backward(t.col_norm_sum(x));
  CHECK(t.grad(x).col(1).isZero());
}

TEST_CASE("row_lse_offdiag value and gradient") {
  Rng rng(41);
  const Mat x0 = rng.normal_matrix(5, 5);
  const Mat w0 = rng.normal_matrix(5, 1);
  Tape<double> t;
  Var x = t.input(x0);
  Var lse = t.row_lse_offdiag(x);
  for (Index i = 0; i < 5; ++i) {
    double s = 0.0;
    for (Index j = 0; j < 5; ++j)
      if (j != i) s += std::exp(x0(i, j));
    CHECK(t.value(lse)(i, 0) == doctest::Approx(std::log(s)).epsilon(1e-12));
  }
  t.backward(t.sum(t.mul_const(lse, w0)));
  const auto f = [&](const Mat& m) {
    double total = 0.0;
    for (Index i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < m.cols(); ++j)
        if (j != i) s += std::exp(m(i, j));
      total += w0(i, 0) * std::log(s);
    }
    return total;
  };
  CHECK(testing::max_relative_error(t.grad(x), fd_of(f, x0)) < 1e-6);
}

TEST_CASE("gather_rows accumulates duplicate indices") {
  Mat x0(3, 2);
  x0 << 1, 2, 3, 4, 5, 6;
  Tape<double> t;
  Var x = t.input(x0);
  Var g = t.gather_rows(x, {0, 0, 2});
  CHECK(t.value(g).rows() == 3);
  t.backward(t.sum(g));
  Mat expected(3, 2);
  expected << 2, 2, 0, 0, 1, 1;
  CHECK(t.grad(x).isApprox(expected));
}

TEST_CASE("vstack splits gradients back to parts") {
  Rng rng(43);
  const Mat a0 = rng.normal_matrix(2, 3);
  const Mat b0 = rng.normal_matrix(4, 3);
  Tape<double> t;
  Var a = t.input(a0);
  Var b = t.input(b0);
  Var s = t.vstack({a, b});
  CHECK(t.value(s).rows() == 6);
  t.backward(t.sum_squares(s));
  CHECK(t.grad(a).isApprox(2.0 * a0, 1e-12));
  CHECK(t.grad(b).isApprox(2.0 * b0, 1e-12));
}

TEST_CASE("forward values are deterministic") {
  Rng rng(47);
  const Mat x0 = rng.normal_matrix(4, 4);
  const auto run = [&]() {
    Tape<double> t;
    Var x = t.input(x0);
    return t.value(t.row_softmax(t.matmul(x, x)));
  };
  const Mat first = run();
  const Mat second = run();
  CHECK((first - second).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
