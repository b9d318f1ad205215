#pragma once

#include "pvcmc/autodiff.hpp"
#include "pvcmc/common.hpp"
#include "pvcmc/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace pvcmc {

enum class Activation { kRelu, kIdentity };

enum class NetRole { kEncoder, kDecoder, kClusterHead };

template <typename Scalar>
struct Layer {
  MatrixX<Scalar> weight;  // in x out
  MatrixX<Scalar> bias;    // 1 x out
  Activation activation = Activation::kIdentity;
};

/// Fully connected network; the role tags which pipeline slot it fills.
template <typename Scalar>
struct Mlp {
  std::vector<Layer<Scalar>> layers;
  NetRole role = NetRole::kEncoder;

  Index in_dim() const { return layers.front().weight.rows(); }
  Index out_dim() const { return layers.back().weight.cols(); }
};

/// Glorot-uniform initialization over the dimension chain
/// dims[0] -> dims[1] -> ... -> dims.back(); ReLU on hidden layers,
/// identity on the output layer.
template <typename Scalar>
Mlp<Scalar> make_mlp(const std::vector<Index>& dims, NetRole role, Rng& rng) {
  require(dims.size() >= 2, "make_mlp: need at least input and output dims");
  Mlp<Scalar> net;
  net.role = role;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer<Scalar> layer;
    const Scalar bound =
        std::sqrt(Scalar(6) / static_cast<Scalar>(dims[i] + dims[i + 1]));
    layer.weight = rng.uniform_matrix<Scalar>(dims[i], dims[i + 1], -bound, bound);
    layer.bias = rng.uniform_matrix<Scalar>(1, dims[i + 1], -bound, bound);
    layer.activation =
        (i + 2 < dims.size()) ? Activation::kRelu : Activation::kIdentity;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Tape handles for one network's parameters within a single graph.
template <typename Scalar>
struct StagedMlp {
  const Mlp<Scalar>* spec = nullptr;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

template <typename Scalar>
StagedMlp<Scalar> stage(ad::Tape<Scalar>& tape, const Mlp<Scalar>& net) {
  StagedMlp<Scalar> staged;
  staged.spec = &net;
  for (const auto& layer : net.layers) {
    staged.weights.push_back(tape.input(layer.weight));
    staged.biases.push_back(tape.input(layer.bias));
  }
  return staged;
}

template <typename Scalar>
ad::Var forward(ad::Tape<Scalar>& tape, const StagedMlp<Scalar>& staged, ad::Var x) {
  require(staged.spec != nullptr, "forward: unstaged network");
  require(tape.value(x).cols() == staged.spec->in_dim(),
          "forward: input width does not match the network");
  ad::Var h = x;
  for (std::size_t i = 0; i < staged.weights.size(); ++i) {
    h = tape.add_rowvec(tape.matmul(h, staged.weights[i]), staged.biases[i]);
    if (staged.spec->layers[i].activation == Activation::kRelu) h = tape.relu(h);
  }
  return h;
}

/// H = f(X; theta_e); latent rows, one per sample.
template <typename Scalar>
ad::Var encode(ad::Tape<Scalar>& tape, const Mlp<Scalar>& net, ad::Var x) {
  require(net.role == NetRole::kEncoder, "encode: network role is not encoder");
  return forward(tape, stage(tape, net), x);
}

template <typename Scalar>
ad::Var decode(ad::Tape<Scalar>& tape, const Mlp<Scalar>& net, ad::Var h) {
  require(net.role == NetRole::kDecoder, "decode: network role is not decoder");
  return forward(tape, stage(tape, net), h);
}

/// Row-stochastic cluster assignment probabilities (logits through softmax).
template <typename Scalar>
ad::Var cluster_probabilities(ad::Tape<Scalar>& tape, const Mlp<Scalar>& head, ad::Var h) {
  require(head.role == NetRole::kClusterHead,
          "cluster_probabilities: network role is not cluster-head");
  require(head.out_dim() >= 2, "cluster_probabilities: need at least two clusters");
  return tape.row_softmax(forward(tape, stage(tape, head), h));
}

/// Adam moments for a fixed list of parameter tensors.
template <typename Scalar>
struct AdamState {
  std::vector<MatrixX<Scalar>> m;
  std::vector<MatrixX<Scalar>> v;
  long t = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  Scalar learning_rate = Scalar(1e-4);
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(const std::vector<MatrixX<Scalar>*>& params,
                                  Scalar learning_rate) {
  AdamState<Scalar> state;
  state.learning_rate = learning_rate;
  for (const auto* p : params) {
    state.m.push_back(MatrixX<Scalar>::Zero(p->rows(), p->cols()));
    state.v.push_back(MatrixX<Scalar>::Zero(p->rows(), p->cols()));
  }
  return state;
}

/// One bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(const std::vector<MatrixX<Scalar>*>& params,
               const std::vector<MatrixX<Scalar>>& grads, AdamState<Scalar>& state) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_step: parameter/gradient/state sizes disagree");
  state.t += 1;
  const Scalar bc1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.t));
  const Scalar bc2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->rows() == grads[i].rows() && params[i]->cols() == grads[i].cols(),
            "adam_step: gradient shape mismatch");
    state.m[i] = state.beta1 * state.m[i] + (Scalar(1) - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] +
                 (Scalar(1) - state.beta2) * grads[i].cwiseProduct(grads[i]);
    const MatrixX<Scalar> m_hat = state.m[i] / bc1;
    const MatrixX<Scalar> v_hat = state.v[i] / bc2;
    params[i]->array() -=
        state.learning_rate * m_hat.array() / (v_hat.array().sqrt() + state.eps);
  }
}

}  // namespace pvcmc
