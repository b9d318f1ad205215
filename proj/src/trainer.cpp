#include "pvcmc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>

namespace pvcmc {

namespace {

using ad::Tape;
using ad::Var;

Mat mlp_value_forward(const Mlp<double>& net, const Mat& x) {
  Mat h = x;
  for (const auto& layer : net.layers) {
    h = (h * layer.weight).rowwise() + layer.bias.row(0);
    if (layer.activation == Activation::kRelu) h = h.cwiseMax(0.0);
  }
  return h;
}

std::vector<Index> mask_rows(const MaskMatrix& mask, int view) {
  std::vector<Index> rows;
  for (Index i = 0; i < mask.rows(); ++i)
    if (mask(i, view)) rows.push_back(i);
  return rows;
}

/// Everything one optimization epoch needs from the tape.
struct Graph {
  Tape<double> tape;
  std::vector<Var> tensor_vars;  // aligned with TrainState::tensors()
  LossTerms<double> terms;
  std::vector<Var> per_view;
  Var total1;
  Var total2;
  bool has_total2 = false;
  LossBreakdown<double> breakdown;
};

StagedMlp<double> stage_into(Tape<double>& tape, const Mlp<double>& net,
                             std::vector<Var>& tensor_vars) {
  StagedMlp<double> staged = stage(tape, net);
  for (std::size_t l = 0; l < staged.weights.size(); ++l) {
    tensor_vars.push_back(staged.weights[l]);
    tensor_vars.push_back(staged.biases[l]);
  }
  return staged;
}

/// Builds the full objective once; both totals share the same forward pass.
std::unique_ptr<Graph> build_graph(const TrainState& state, const Vec& weights,
                                   bool with_weighted_total) {
  const int n_views = state.dataset->n_views();
  const Index n = state.dataset->n_samples();
  const auto& hp = state.config.hp;

  auto graph = std::make_unique<Graph>();
  Tape<double>& t = graph->tape;

  std::vector<StagedMlp<double>> encoders, decoders;
  for (int v = 0; v < n_views; ++v)
    encoders.push_back(stage_into(t, state.params.encoders[static_cast<std::size_t>(v)],
                                  graph->tensor_vars));
  for (int v = 0; v < n_views; ++v)
    decoders.push_back(stage_into(t, state.params.decoders[static_cast<std::size_t>(v)],
                                  graph->tensor_vars));
  StagedMlp<double> head = stage_into(t, state.params.cluster_head, graph->tensor_vars);
  Var z = t.input(state.z);
  graph->tensor_vars.push_back(z);

  std::vector<Var> latents, recon, probs;
  for (int v = 0; v < n_views; ++v) {
    Var x = t.constant(state.inputs[static_cast<std::size_t>(v)]);
    Var h = forward(t, encoders[static_cast<std::size_t>(v)], x);
    latents.push_back(h);
    recon.push_back(forward(t, decoders[static_cast<std::size_t>(v)], h));
    probs.push_back(t.row_softmax(forward(t, head, h)));
  }

  // Per-view reconstruction over scored rows; the re term is their sum.
  Var zero = t.constant(Mat::Zero(1, 1));
  Var re = zero;
  for (int v = 0; v < n_views; ++v) {
    const auto rows = mask_rows(state.target_observed, v);
    Var lv = zero;
    if (!rows.empty()) {
      Var diff = t.sub(recon[static_cast<std::size_t>(v)],
                       t.constant(state.targets[static_cast<std::size_t>(v)]));
      lv = t.sum_squares(t.gather_rows(diff, rows));
    }
    graph->per_view.push_back(lv);
    re = t.add(re, lv);
  }
  graph->terms.re = re;

  PairingMask participation_mask;
  participation_mask.observed = state.participation;

  // Fused representation: weighted mean of the latents each sample has.
  {
    Vec row_totals = Vec::Zero(n);
    for (int v = 0; v < n_views; ++v)
      for (Index i = 0; i < n; ++i)
        if (state.participation(i, v)) row_totals[i] += weights[v];
    Var fused = t.constant(Mat::Zero(n, hp.k_latent));
    for (int v = 0; v < n_views; ++v) {
      Mat fusion_weights = Mat::Zero(n, hp.k_latent);
      for (Index i = 0; i < n; ++i)
        if (state.participation(i, v))
          fusion_weights.row(i).setConstant(weights[v] / row_totals[i]);
      fused = t.add(fused, t.mul_const(latents[static_cast<std::size_t>(v)], fusion_weights));
    }
    graph->terms.se = self_expression_loss(t, fused, z, hp.lambda1);
  }

  // Contrastive term over participating (sample, view) representations.
  if (n_views >= 2) {
    std::vector<Var> parts;
    std::vector<std::vector<int>> stacked_index(
        static_cast<std::size_t>(n_views), std::vector<int>(static_cast<std::size_t>(n), -1));
    int next = 0;
    for (int v = 0; v < n_views; ++v) {
      const auto rows = mask_rows(state.participation, v);
      if (rows.empty()) continue;
      parts.push_back(t.gather_rows(latents[static_cast<std::size_t>(v)], rows));
      for (const Index i : rows)
        stacked_index[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)] = next++;
    }
    std::vector<std::vector<int>> positives(static_cast<std::size_t>(next));
    int n_anchors = 0;
    for (int v = 0; v < n_views; ++v) {
      for (Index i = 0; i < n; ++i) {
        const int self = stacked_index[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)];
        if (self < 0) continue;
        auto& mine = positives[static_cast<std::size_t>(self)];
        for (int u = 0; u < n_views; ++u) {
          if (u == v) continue;
          const int other = stacked_index[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
          if (other >= 0) mine.push_back(other);
        }
        if (!mine.empty()) ++n_anchors;
      }
    }
    graph->terms.mcl = (n_anchors > 0 && next >= 2)
                           ? contrastive_loss(t, t.vstack(parts), positives, hp.tau)
                           : zero;
  } else {
    graph->terms.mcl = zero;
  }

  graph->terms.feature_align =
      n_views >= 2 ? feature_alignment_loss(t, latents, participation_mask) : zero;
  graph->terms.prob_align =
      n_views >= 2 ? probability_alignment_loss(t, probs, participation_mask, hp.log_eps)
                   : zero;
  {
    std::vector<Var> observed_probs;
    for (int v = 0; v < n_views; ++v) {
      const auto rows = mask_rows(state.participation, v);
      if (!rows.empty())
        observed_probs.push_back(t.gather_rows(probs[static_cast<std::size_t>(v)], rows));
    }
    graph->terms.entropy_reg = entropy_regularization(t, observed_probs, hp.log_eps);
  }

  auto [total1, breakdown] = total_loss(t, graph->terms, hp);
  graph->total1 = total1;
  graph->breakdown = breakdown;

  if (with_weighted_total) {
    Var total2 = zero;
    for (int v = 0; v < n_views; ++v)
      total2 = t.add(total2, t.scale(graph->per_view[static_cast<std::size_t>(v)], weights[v]));
    graph->total2 = total2;
    graph->has_total2 = true;
  }
  return graph;
}

enum class EpochMode { kRepresentation, kViewWeighted };

/// One full-batch Adam step; appends and returns the history record.
EpochRecord run_epoch(TrainState& state, const Vec& weights, EpochMode mode,
                      const std::string& phase) {
  const int n_views = state.dataset->n_views();
  EpochRecord record;
  record.phase = phase;
  record.weights = weights;
  try {
    const std::unique_ptr<Graph> graph = build_graph(state, weights, true);
    graph->tape.backward(mode == EpochMode::kViewWeighted ? graph->total2 : graph->total1);

    const std::vector<Mat*> tensors = state.tensors();
    require(tensors.size() == graph->tensor_vars.size(), "run_epoch: tensor list out of sync");
    std::vector<Mat> grads;
    grads.reserve(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i)
      grads.push_back(graph->tape.grad(graph->tensor_vars[i]));
    adam_step(tensors, grads, state.adam);
    state.z.diagonal().setZero();

    record.losses = graph->breakdown;
    record.per_view_losses = Vec(n_views);
    for (int v = 0; v < n_views; ++v)
      record.per_view_losses[v] = graph->tape.scalar(graph->per_view[static_cast<std::size_t>(v)]);
  } catch (const ComputeError& e) {
    throw ComputeError("training diverged at epoch " + std::to_string(state.epoch_counter) +
                       " (" + phase + "): " + e.what());
  }
  record.epoch = state.epoch_counter++;
  state.history.push_back(record);
  return record;
}

void check_inputs(const MultiViewDataset& dataset, const PairingMask& mask) {
  require(dataset.n_views() >= 1, "train: dataset has no views");
  const Index n = dataset.n_samples();
  require(n >= 1, "train: empty dataset");
  for (const auto& view : dataset.views) {
    require(view.values.rows() == n, "train: views disagree on sample count");
    require_finite(view.values, "train: view " + std::to_string(view.view_id));
  }
  require(mask.n() == n && mask.n_views() == dataset.n_views(), "train: mask shape mismatch");
  for (Index i = 0; i < n; ++i)
    require(mask.observed.row(i).any(), "train: sample " + std::to_string(i) + " has no views");
}

void apply_imputation(TrainState& state) {
  std::vector<Mat> embeddings;
  for (int v = 0; v < state.dataset->n_views(); ++v)
    embeddings.push_back(mlp_value_forward(state.params.encoders[static_cast<std::size_t>(v)],
                                           state.inputs[static_cast<std::size_t>(v)]));
  ImputationResult result =
      knn_impute(*state.dataset, *state.mask, embeddings, state.config.knn_k,
                 state.config.knn_distance_weighted);
  for (int v = 0; v < state.dataset->n_views(); ++v)
    state.inputs[static_cast<std::size_t>(v)] =
        result.completed_views[static_cast<std::size_t>(v)].values;
  state.participation.setConstant(true);
  if (state.config.trust_imputed) {
    state.targets = state.inputs;
    state.target_observed.setConstant(true);
  }
  state.imputed = true;
  state.imputation_records = std::move(result.records);
}

std::map<std::string, std::string> build_metadata(const TrainState& state) {
  const auto& config = state.config;
  std::map<std::string, std::string> meta;
  meta["vit_substitution"] = "mlp_encoder";
  meta["fusion"] = "weighted_mean_over_observed_views";
  meta["self_expression_orientation"] = "H_approx_Z_times_H";
  meta["l12_norm"] = "sum_of_column_l2_norms";
  meta["contrastive_sign"] = "negated_mean_log_ratio";
  meta["contrastive_denominator"] = "all_other_representations";
  meta["feature_alignment_normalization"] = "l2";
  meta["feature_alignment_pairing"] = "ordered_view_pairs_coobserved";
  meta["per_view_loss"] = "observed_reconstruction";
  meta["step3_schedule"] = "alternate_1_1";
  meta["imputed_rows_join_contrastive"] = "true";
  meta["imputation"] = state.imputed ? "knn_latent_space" : "noop_no_missing_rows";
  meta["trust_imputed"] = config.trust_imputed ? "true" : "false";
  meta["probability_alignment_enabled"] =
      config.hp.enable_probability_alignment ? "true" : "false";
  meta["paired_fraction"] = std::to_string(state.mask->paired_fraction);
  meta["missing_rate_as_complement"] = std::to_string(1.0 - state.mask->paired_fraction);
  meta["knn_k"] = std::to_string(config.knn_k);
  meta["knn_distance_weighted"] = config.knn_distance_weighted ? "true" : "false";
  meta["seed"] = std::to_string(config.seed);
  meta["learning_rate"] = std::to_string(config.learning_rate);
  return meta;
}

TrainResult finish(TrainState& state, Vec weights) {
  TrainResult result;
  result.z = state.z;
  result.weights = std::move(weights);
  result.params = state.params;
  result.history = state.history;
  result.imputation_records = state.imputation_records;
  result.metadata = build_metadata(state);
  return result;
}

}  // namespace

std::vector<Mat*> TrainState::tensors() {
  std::vector<Mat*> refs;
  const auto push_net = [&refs](Mlp<double>& net) {
    for (auto& layer : net.layers) {
      refs.push_back(&layer.weight);
      refs.push_back(&layer.bias);
    }
  };
  for (auto& net : params.encoders) push_net(net);
  for (auto& net : params.decoders) push_net(net);
  push_net(params.cluster_head);
  refs.push_back(&z);
  return refs;
}

std::vector<std::string> TrainState::tensor_names() const {
  std::vector<std::string> names;
  const auto push_net = [&names](const Mlp<double>& net, const std::string& prefix) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      names.push_back(prefix + ".layer" + std::to_string(l) + ".weight");
      names.push_back(prefix + ".layer" + std::to_string(l) + ".bias");
    }
  };
  for (std::size_t v = 0; v < params.encoders.size(); ++v)
    push_net(params.encoders[v], "encoder" + std::to_string(v));
  for (std::size_t v = 0; v < params.decoders.size(); ++v)
    push_net(params.decoders[v], "decoder" + std::to_string(v));
  push_net(params.cluster_head, "cluster_head");
  names.push_back("self_expression_z");
  return names;
}

TrainState step_one(const MultiViewDataset& dataset, const PairingMask& mask,
                    const TrainConfig& config) {
  config.check();
  check_inputs(dataset, mask);

  TrainState state;
  state.dataset = &dataset;
  state.mask = &mask;
  state.config = config;

  const int n_views = dataset.n_views();
  const Index n = dataset.n_samples();
  const Index k = config.hp.k_latent;
  std::vector<Index> hidden = config.hidden_dims;
  if (hidden.empty()) {
    const Index width = std::max<Index>(16, 2 * k);
    hidden = {width, width};
  }

  Rng rng(config.seed);
  for (int v = 0; v < n_views; ++v) {
    const Index d = dataset.views[static_cast<std::size_t>(v)].values.cols();
    std::vector<Index> enc_dims{d};
    enc_dims.insert(enc_dims.end(), hidden.begin(), hidden.end());
    enc_dims.push_back(k);
    state.params.encoders.push_back(make_mlp<double>(enc_dims, NetRole::kEncoder, rng));
    std::vector<Index> dec_dims{k};
    dec_dims.insert(dec_dims.end(), hidden.rbegin(), hidden.rend());
    dec_dims.push_back(d);
    state.params.decoders.push_back(make_mlp<double>(dec_dims, NetRole::kDecoder, rng));
  }
  state.params.cluster_head =
      make_mlp<double>({k, static_cast<Index>(config.hp.n_clusters)}, NetRole::kClusterHead, rng);

  state.z = Mat::Zero(n, n);
  state.adam = make_adam_state<double>(state.tensors(), config.learning_rate);
  state.weights = Vec::Constant(n_views, 1.0 / static_cast<double>(n_views));

  // Missing entries enter the encoders as zeros until imputation.
  state.inputs.reserve(static_cast<std::size_t>(n_views));
  state.targets.reserve(static_cast<std::size_t>(n_views));
  for (int v = 0; v < n_views; ++v) {
    Mat x = dataset.views[static_cast<std::size_t>(v)].values;
    for (Index i = 0; i < n; ++i)
      if (!mask.observed(i, v)) x.row(i).setZero();
    state.inputs.push_back(x);
    state.targets.push_back(dataset.views[static_cast<std::size_t>(v)].values);
  }
  state.participation = mask.observed;
  state.target_observed = mask.observed;

  double previous_total = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs_step1; ++epoch) {
    const EpochRecord record =
        run_epoch(state, state.weights, EpochMode::kRepresentation, "step1");
    if (epoch > 0 && std::abs(record.losses.total - previous_total) < config.tolerance) break;
    previous_total = record.losses.total;
  }
  return state;
}

double per_view_loss(const TrainState& state, int view) {
  require(state.dataset != nullptr, "per_view_loss: empty state");
  require(view >= 0 && view < state.dataset->n_views(), "per_view_loss: invalid view index");
  const auto& encoder = state.params.encoders[static_cast<std::size_t>(view)];
  const auto& decoder = state.params.decoders[static_cast<std::size_t>(view)];
  const Mat reconstructed =
      mlp_value_forward(decoder, mlp_value_forward(encoder, state.inputs[static_cast<std::size_t>(view)]));
  const Mat& target = state.targets[static_cast<std::size_t>(view)];
  double loss = 0.0;
  for (Index i = 0; i < target.rows(); ++i)
    if (state.target_observed(i, view))
      loss += (reconstructed.row(i) - target.row(i)).squaredNorm();
  return loss;
}

Vec update_view_weights(const Vec& losses, double alpha) {
  require(losses.size() >= 1, "update_view_weights: empty losses");
  require(alpha > 0.0, "update_view_weights: alpha must be positive");
  require(losses.allFinite(), "update_view_weights: losses must be finite");
  const Vec scaled = -alpha * losses;
  const double shift = scaled.maxCoeff();
  Vec weights = (scaled.array() - shift).exp();
  weights /= weights.sum();
  return weights;
}

TrainResult step_three(TrainState& state, const Vec& initial_weights,
                       const TrainConfig& config) {
  require(state.dataset != nullptr, "step_three: empty state");
  const int n_views = state.dataset->n_views();
  require(initial_weights.size() == n_views, "step_three: weight count mismatch");
  require(std::abs(initial_weights.sum() - 1.0) < 1e-9 && (initial_weights.array() > 0).all(),
          "step_three: weights must be positive and sum to one");

  // Step 3 is its own optimization round; stale curvature estimates from
  // pretraining mis-scale the first updates of parameters that only become
  // active now (Z rows of freshly imputed samples).
  state.adam = make_adam_state<double>(state.tensors(), config.learning_rate);

  Vec weights = initial_weights;
  double previous_total = std::numeric_limits<double>::infinity();
  for (int iteration = 0; iteration < config.epochs_step3; ++iteration) {
    if (config.reimpute_each_iteration && state.imputed) apply_imputation(state);

    const EpochRecord repr =
        run_epoch(state, weights, EpochMode::kRepresentation, "step3_repr");

    Vec per_view(n_views);
    for (int v = 0; v < n_views; ++v) per_view[v] = per_view_loss(state, v);
    weights = update_view_weights(per_view, config.hp.alpha);

    run_epoch(state, weights, EpochMode::kViewWeighted, "step3_weighted");

    if (iteration > 0 && std::abs(repr.losses.total - previous_total) < config.tolerance) break;
    previous_total = repr.losses.total;
  }
  state.weights = weights;
  return finish(state, weights);
}

TrainResult train(const MultiViewDataset& dataset, const PairingMask& mask,
                  const TrainConfig& config) {
  TrainState state = step_one(dataset, mask, config);

  bool any_missing = false;
  for (Index i = 0; i < mask.n() && !any_missing; ++i) any_missing = !mask.is_paired(i);
  if (any_missing) apply_imputation(state);

  Vec per_view(dataset.n_views());
  for (int v = 0; v < dataset.n_views(); ++v) per_view[v] = per_view_loss(state, v);
  const Vec weights = update_view_weights(per_view, config.hp.alpha);

  return step_three(state, weights, config);
}

}  // namespace pvcmc
