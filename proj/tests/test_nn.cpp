#include "pvcmc/nn.hpp"
#include "pvcmc/rng.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace pvcmc;
using ad::Tape;
using ad::Var;

namespace {

Mlp<double> zero_net(const std::vector<Index>& dims, NetRole role) {
  Rng rng(0);
  Mlp<double> net = make_mlp<double>(dims, role, rng);
  for (auto& layer : net.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return net;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("zero encoder maps anything to zero") {
  const Mlp<double> net = zero_net({4, 3, 3, 2}, NetRole::kEncoder);
  Rng rng(1);
  Tape<double> t;
  Var out = encode(t, net, t.input(rng.normal_matrix(5, 4)));
  CHECK(t.value(out).isZero());
  CHECK(t.value(out).rows() == 5);
  CHECK(t.value(out).cols() == 2);
}

TEST_CASE("single identity layer passes input through") {
  Mlp<double> net = zero_net({3, 3}, NetRole::kEncoder);
  net.layers[0].weight = Mat::Identity(3, 3);
  Rng rng(2);
  const Mat x0 = rng.normal_matrix(4, 3);
  Tape<double> t;
  Var out = encode(t, net, t.input(x0));
  CHECK(t.value(out).isApprox(x0));
}

TEST_CASE("decode mirrors encode shape contract") {
  Rng rng(3);
  Mlp<double> enc = make_mlp<double>({4, 8, 8, 2}, NetRole::kEncoder, rng);
  Mlp<double> dec = make_mlp<double>({2, 8, 8, 4}, NetRole::kDecoder, rng);
  const Mat x0 = rng.normal_matrix(6, 4);
  Tape<double> t;
  Var h = encode(t, enc, t.input(x0));
  Var xhat = decode(t, dec, h);
  CHECK(t.value(xhat).rows() == 6);
  CHECK(t.value(xhat).cols() == 4);
  CHECK(t.value(xhat).allFinite());
}

TEST_CASE("role tags are enforced") {
  Rng rng(4);
  Mlp<double> enc = make_mlp<double>({3, 2}, NetRole::kEncoder, rng);
  Tape<double> t;
  Var x = t.input(Mat::Zero(2, 3));
  CHECK_THROWS_AS(decode(t, enc, x), InvalidArgument);
  CHECK_THROWS_AS(cluster_probabilities(t, enc, x), InvalidArgument);
}

TEST_CASE("encode rejects mismatched input width") {
  Rng rng(5);
  Mlp<double> enc = make_mlp<double>({3, 2}, NetRole::kEncoder, rng);
  Tape<double> t;
  CHECK_THROWS_AS(encode(t, enc, t.input(Mat::Zero(2, 4))), InvalidArgument);
}

TEST_CASE("zero cluster head yields the uniform distribution") {
  const Mlp<double> head = zero_net({3, 4}, NetRole::kClusterHead);
  Tape<double> t;
  Var q = cluster_probabilities(t, head, t.input(Mat::Ones(2, 3)));
  CHECK(t.value(q).isApproxToConstant(0.25, 1e-12));
}

TEST_CASE("cluster head softmax matches the closed form on [10, 0] logits") {
  Mlp<double> head = zero_net({1, 2}, NetRole::kClusterHead);
  head.layers[0].weight << 10.0, 0.0;  // input 1 -> logits [10, 0]
  Tape<double> t;
  Var q = cluster_probabilities(t, head, t.input(Mat::Ones(1, 1)));
  const double expected = std::exp(10.0) / (std::exp(10.0) + 1.0);
  CHECK(t.value(q)(0, 0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(t.value(q)(0, 1) == doctest::Approx(1.0 - expected).epsilon(1e-9));
}

TEST_CASE("cluster head rows sum to one within 1e-9") {
  Rng rng(6);
  Mlp<double> head = make_mlp<double>({3, 5}, NetRole::kClusterHead, rng);
  Tape<double> t;
  Var q = cluster_probabilities(t, head, t.input(rng.normal_matrix(5, 3)));
  for (Index i = 0; i < 5; ++i)
    CHECK(std::abs(t.value(q).row(i).sum() - 1.0) < 1e-9);
}

TEST_CASE("two-layer network gradient matches finite differences") {
  Rng rng(7);
  Mlp<double> net = make_mlp<double>({4, 6, 6, 3}, NetRole::kEncoder, rng);
  const Mat x0 = rng.normal_matrix(3, 4);

  Tape<double> t;
  StagedMlp<double> staged = stage(t, net);
  t.backward(t.sum_squares(forward(t, staged, t.input(x0))));

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto f_w = [&](const Mat& m) {
      Mlp<double> probe = net;
      probe.layers[l].weight = m;
      Mat h = x0;
      for (const auto& layer : probe.layers) {
        h = (h * layer.weight).rowwise() + layer.bias.row(0);
        if (layer.activation == Activation::kRelu) h = h.cwiseMax(0.0);
      }
      return h.squaredNorm();
    };
    const Mat fd = testing::finite_difference_gradient(f_w, net.layers[l].weight);
    CHECK(testing::max_relative_error(t.grad(staged.weights[l]), fd) < 1e-4);
  }
}

TEST_CASE("glorot init respects the fan bound and is seed reproducible") {
  Rng rng_a(42);
  Rng rng_b(42);
  const Mlp<double> a = make_mlp<double>({10, 8, 4}, NetRole::kEncoder, rng_a);
  const Mlp<double> b = make_mlp<double>({10, 8, 4}, NetRole::kEncoder, rng_b);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    const double bound =
        std::sqrt(6.0 / static_cast<double>(a.layers[l].weight.rows() + a.layers[l].weight.cols()));
    CHECK(a.layers[l].weight.cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  Mat p = Mat::Constant(2, 2, 3.0);
  AdamState<double> state = make_adam_state<double>({&p}, 0.01);
  adam_step<double>({&p}, {Mat::Zero(2, 2)}, state);
  CHECK(p.isApproxToConstant(3.0, 1e-15));
}

TEST_CASE("first adam step moves by about the learning rate") {
  Mat p = Mat::Constant(1, 1, 1.0);
  AdamState<double> state = make_adam_state<double>({&p}, 1e-4);
  adam_step<double>({&p}, {Mat::Constant(1, 1, 1.0)}, state);
  CHECK(p(0, 0) == doctest::Approx(1.0 - 1e-4).epsilon(1e-6));
}

TEST_CASE("three adam steps match the scalar recursion") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 1.0;
  Mat p = Mat::Constant(1, 1, 0.5);
  AdamState<double> state = make_adam_state<double>({&p}, lr);

  double ref = 0.5, m = 0.0, v = 0.0;
  for (int step = 1; step <= 3; ++step) {
    adam_step<double>({&p}, {Mat::Constant(1, 1, g)}, state);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, step));
    const double vh = v / (1 - std::pow(b2, step));
    ref -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(p(0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

}  // TEST_SUITE
