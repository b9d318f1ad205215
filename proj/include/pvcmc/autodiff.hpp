#pragma once

#include "pvcmc/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace pvcmc::ad {

/// Handle into a Tape; valid only for the tape that produced it.
struct Var {
  Index id = -1;
};

/// Reverse-mode tape over dense matrices.
///
/// Every operation records its inputs by node id and a pull closure that
/// routes the output gradient back to them. Creation order is a topological
/// order, so backward() is a single reverse sweep. A tape describes one
/// forward evaluation; build a fresh one per optimization step.
template <typename Scalar>
class Tape {
 public:
  using Mat = MatrixX<Scalar>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf.
  Var input(Mat value) { return emplace(std::move(value), nullptr, "input"); }

  /// Leaf whose gradient the caller does not intend to read.
  Var constant(Mat value) { return emplace(std::move(value), nullptr, "constant"); }

  const Mat& value(Var v) const { return node(v).value; }
  const Mat& grad(Var v) const { return node(v).grad; }

  Scalar scalar(Var v) const {
    const Mat& m = node(v).value;
    require(m.rows() == 1 && m.cols() == 1, "Tape::scalar: node is not 1x1");
    return m(0, 0);
  }

  Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    return emplace(value(a) + value(b),
                   [a, b](Tape& t, const Mat& g) {
                     t.accumulate(a, g);
                     t.accumulate(b, g);
                   },
                   "add");
  }

  Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    return emplace(value(a) - value(b),
                   [a, b](Tape& t, const Mat& g) {
                     t.accumulate(a, g);
                     t.accumulate(b, -g);
                   },
                   "sub");
  }

  Var hadamard(Var a, Var b) {
    require_same_shape(a, b, "hadamard");
    return emplace(value(a).cwiseProduct(value(b)),
                   [a, b](Tape& t, const Mat& g) {
                     t.accumulate(a, g.cwiseProduct(t.value(b)));
                     t.accumulate(b, g.cwiseProduct(t.value(a)));
                   },
                   "hadamard");
  }

  Var matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul: inner dimensions disagree");
    return emplace(value(a) * value(b),
                   [a, b](Tape& t, const Mat& g) {
                     t.accumulate(a, g * t.value(b).transpose());
                     t.accumulate(b, t.value(a).transpose() * g);
                   },
                   "matmul");
  }

  /// A * B^T without materializing the transpose as a node.
  Var matmul_bt(Var a, Var b) {
    require(value(a).cols() == value(b).cols(), "matmul_bt: column counts disagree");
    return emplace(value(a) * value(b).transpose(),
                   [a, b](Tape& t, const Mat& g) {
                     t.accumulate(a, g * t.value(b));
                     t.accumulate(b, g.transpose() * t.value(a));
                   },
                   "matmul_bt");
  }

  Var scale(Var a, Scalar c) {
    return emplace(value(a) * c, [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); },
                   "scale");
  }

  /// Broadcast a 1 x d row (bias) onto every row of a.
  Var add_rowvec(Var a, Var b) {
    require(value(b).rows() == 1 && value(b).cols() == value(a).cols(),
            "add_rowvec: bias must be 1 x cols(a)");
    return emplace(value(a).rowwise() + value(b).row(0),
                   [a, b](Tape& t, const Mat& g) {
                     t.accumulate(a, g);
                     t.accumulate(b, g.colwise().sum());
                   },
                   "add_rowvec");
  }

  Var relu(Var a) {
    return emplace(value(a).cwiseMax(Scalar(0)),
                   [a](Tape& t, const Mat& g) {
                     t.accumulate(a, (t.value(a).array() > Scalar(0))
                                         .select(g.array(), Scalar(0))
                                         .matrix());
                   },
                   "relu");
  }

  /// Numerically stable row-wise softmax.
  Var row_softmax(Var a) {
    const Mat& x = value(a);
    Mat y(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const Scalar m = x.row(i).maxCoeff();
      y.row(i) = (x.row(i).array() - m).exp();
      y.row(i) /= y.row(i).sum();
    }
    Var out = emplace(std::move(y), nullptr, "row_softmax");
    node(out).pull = [a, out](Tape& t, const Mat& g) {
      const Mat& sm = t.value(out);
      Mat dx(g.rows(), g.cols());
      for (Index i = 0; i < g.rows(); ++i) {
        const Scalar inner = g.row(i).dot(sm.row(i));
        dx.row(i) = sm.row(i).cwiseProduct((g.row(i).array() - inner).matrix());
      }
      t.accumulate(a, dx);
    };
    return out;
  }

  /// Rows scaled to unit l2 norm; throws on an exactly zero row.
  Var row_l2_normalize(Var a) {
    const Mat& x = value(a);
    Mat y(x.rows(), x.cols());
    VectorX<Scalar> norms(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      norms[i] = x.row(i).norm();
      if (norms[i] == Scalar(0))
        throw InvalidArgument("row_l2_normalize: zero-norm vector at row " + std::to_string(i));
      y.row(i) = x.row(i) / norms[i];
    }
    Var out = emplace(std::move(y), nullptr, "row_l2_normalize");
    node(out).pull = [a, out, norms](Tape& t, const Mat& g) {
      const Mat& yv = t.value(out);
      Mat dx(g.rows(), g.cols());
      for (Index i = 0; i < g.rows(); ++i) {
        const Scalar inner = g.row(i).dot(yv.row(i));
        dx.row(i) = (g.row(i) - inner * yv.row(i)) / norms[i];
      }
      t.accumulate(a, dx);
    };
    return out;
  }

  Var sum(Var a) {
    Mat s(1, 1);
    s(0, 0) = value(a).sum();
    return emplace(std::move(s),
                   [a](Tape& t, const Mat& g) {
                     t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
                   },
                   "sum");
  }

  /// Squared Frobenius norm.
  Var sum_squares(Var a) {
    Mat s(1, 1);
    s(0, 0) = value(a).squaredNorm();
    return emplace(std::move(s),
                   [a](Tape& t, const Mat& g) { t.accumulate(a, Scalar(2) * g(0, 0) * t.value(a)); },
                   "sum_squares");
  }

  /// Sum of column l2 norms (the l_{1,2} matrix norm).
  Var col_norm_sum(Var a) {
    const Mat& x = value(a);
    Mat s(1, 1);
    s(0, 0) = Scalar(0);
    for (Index j = 0; j < x.cols(); ++j) s(0, 0) += x.col(j).norm();
    return emplace(std::move(s),
                   [a](Tape& t, const Mat& g) {
                     const Mat& x = t.value(a);
                     Mat dx = Mat::Zero(x.rows(), x.cols());
                     for (Index j = 0; j < x.cols(); ++j) {
                       const Scalar norm = x.col(j).norm();
                       if (norm > Scalar(0)) dx.col(j) = g(0, 0) * x.col(j) / norm;
                     }
                     t.accumulate(a, dx);
                   },
                   "col_norm_sum");
  }

  /// Per-row log-sum-exp over off-diagonal entries of a square matrix.
  Var row_lse_offdiag(Var a) {
    const Mat& x = value(a);
    require(x.rows() == x.cols() && x.rows() >= 2,
            "row_lse_offdiag: needs a square matrix with at least two rows");
    Mat out(x.rows(), 1);
    for (Index i = 0; i < x.rows(); ++i) {
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      for (Index j = 0; j < x.cols(); ++j)
        if (j != i) m = std::max(m, x(i, j));
      Scalar s = Scalar(0);
      for (Index j = 0; j < x.cols(); ++j)
        if (j != i) s += std::exp(x(i, j) - m);
      out(i, 0) = m + std::log(s);
    }
    Var res = emplace(std::move(out), nullptr, "row_lse_offdiag");
    node(res).pull = [a, res](Tape& t, const Mat& g) {
      const Mat& x = t.value(a);
      const Mat& lse = t.value(res);
      Mat dx = Mat::Zero(x.rows(), x.cols());
      for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j)
          if (j != i) dx(i, j) = g(i, 0) * std::exp(x(i, j) - lse(i, 0));
      t.accumulate(a, dx);
    };
    return res;
  }

  /// Elementwise log(max(x, eps)); gradient is zero where the clamp engages.
  Var log_clamped(Var a, Scalar eps) {
    require(eps > Scalar(0), "log_clamped: eps must be positive");
    return emplace(value(a).cwiseMax(eps).array().log().matrix(),
                   [a, eps](Tape& t, const Mat& g) {
                     const Mat& x = t.value(a);
                     t.accumulate(a, (x.array() >= eps)
                                         .select(g.array() / x.array(), Scalar(0))
                                         .matrix());
                   },
                   "log_clamped");
  }

  /// Hadamard product with a constant (masking, per-entry weights).
  Var mul_const(Var a, Mat weights) {
    require(weights.rows() == value(a).rows() && weights.cols() == value(a).cols(),
            "mul_const: weight shape mismatch");
    Mat out = value(a).cwiseProduct(weights);
    return emplace(std::move(out),
                   [a, w = std::move(weights)](Tape& t, const Mat& g) {
                     t.accumulate(a, g.cwiseProduct(w));
                   },
                   "mul_const");
  }

  /// Row gather: out.row(i) = a.row(rows[i]). Duplicate indices accumulate.
  Var gather_rows(Var a, std::vector<Index> rows) {
    const Mat& x = value(a);
    Mat out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i] >= 0 && rows[i] < x.rows(), "gather_rows: index out of range");
      out.row(static_cast<Index>(i)) = x.row(rows[i]);
    }
    return emplace(std::move(out),
                   [a, idx = std::move(rows)](Tape& t, const Mat& g) {
                     Mat dx = Mat::Zero(t.value(a).rows(), t.value(a).cols());
                     for (std::size_t i = 0; i < idx.size(); ++i)
                       dx.row(idx[i]) += g.row(static_cast<Index>(i));
                     t.accumulate(a, dx);
                   },
                   "gather_rows");
  }

  /// Stack blocks of rows; all parts must share a column count.
  Var vstack(const std::vector<Var>& parts) {
    require(!parts.empty(), "vstack: no parts");
    Index rows = 0;
    const Index cols = value(parts.front()).cols();
    for (Var p : parts) {
      require(value(p).cols() == cols, "vstack: column counts disagree");
      rows += value(p).rows();
    }
    Mat out(rows, cols);
    Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    return emplace(std::move(out),
                   [parts](Tape& t, const Mat& g) {
                     Index at = 0;
                     for (Var p : parts) {
                       const Index r = t.value(p).rows();
                       t.accumulate(p, g.middleRows(at, r));
                       at += r;
                     }
                   },
                   "vstack");
  }

  /// Reverse sweep from a scalar loss; fills grad() of every node.
  void backward(Var loss) {
    const Mat& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
      throw InvalidArgument("backward: loss must be a 1x1 tensor");
    for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
    node(loss).grad(0, 0) = Scalar(1);
    for (Index i = static_cast<Index>(nodes_.size()) - 1; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.pull) n.pull(*this, n.grad);
    }
    for (const auto& n : nodes_)
      if (!n.grad.allFinite())
        throw ComputeError("backward: NaN encountered in gradient of op '" + n.op + "'");
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Mat&)> pull;
    std::string op;
  };

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  void accumulate(Var v, const Mat& g) { node(v).grad += g; }

  void require_same_shape(Var a, Var b, const char* op) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            std::string(op) + ": operand shapes disagree");
  }

  Var emplace(Mat value, std::function<void(Tape&, const Mat&)> pull, const char* op) {
    if (!value.allFinite())
      throw ComputeError(std::string(op) + ": non-finite values in forward result");
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.pull = std::move(pull);
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var{static_cast<Index>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

/// sum(a .* b) as a scalar node.
template <typename Scalar>
Var dot(Tape<Scalar>& t, Var a, Var b) {
  return t.sum(t.hadamard(a, b));
}

template <typename Scalar>
Var neg(Tape<Scalar>& t, Var a) {
  return t.scale(a, Scalar(-1));
}

template <typename Scalar>
Var mean(Tape<Scalar>& t, Var a) {
  const auto& v = t.value(a);
  return t.scale(t.sum(a), Scalar(1) / static_cast<Scalar>(v.rows() * v.cols()));
}

}  // namespace pvcmc::ad
