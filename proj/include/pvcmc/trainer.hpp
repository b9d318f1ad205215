#pragma once

#include "pvcmc/common.hpp"
#include "pvcmc/dataio.hpp"
#include "pvcmc/impute.hpp"
#include "pvcmc/losses.hpp"
#include "pvcmc/nn.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pvcmc {

struct TrainConfig {
  Hyperparameters<double> hp;
  int epochs_step1 = 500;
  int epochs_step3 = 200;  // outer alternation iterations
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;      // early stop on |delta total|
  bool trust_imputed = false;   // imputed entries become reconstruction targets
  bool reimpute_each_iteration = false;
  int knn_k = 5;
  bool knn_distance_weighted = false;
  std::vector<Index> hidden_dims;  // empty -> two hidden layers of max(16, 2k)

  void check() const {
    hp.check();
    require(epochs_step1 >= 1, "train config: epochs_step1 must be >= 1");
    require(epochs_step3 >= 1, "train config: epochs_step3 must be >= 1");
    require(learning_rate > 0.0, "train config: learning rate must be positive");
    require(tolerance >= 0.0, "train config: tolerance must be non-negative");
    require(knn_k >= 1, "train config: knn_k must be >= 1");
  }
};

/// Encoder/decoder stacks per view plus the shared cluster head.
struct ParameterSet {
  std::vector<Mlp<double>> encoders;
  std::vector<Mlp<double>> decoders;
  Mlp<double> cluster_head;
};

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // "step1", "step3_repr", "step3_weighted"
  LossBreakdown<double> losses;
  Vec per_view_losses;
  Vec weights;
};

struct TrainResult {
  Mat z;
  Vec weights;
  ParameterSet params;
  std::vector<EpochRecord> history;
  std::vector<ImputationRecord> imputation_records;
  std::map<std::string, std::string> metadata;
};

/// Mutable training state threaded through the three algorithm steps.
/// Holds non-owning pointers to the dataset and mask; keep both alive.
struct TrainState {
  const MultiViewDataset* dataset = nullptr;
  const PairingMask* mask = nullptr;
  TrainConfig config;

  ParameterSet params;
  Mat z;
  AdamState<double> adam;
  Vec weights;  // fusion weights currently in effect

  std::vector<Mat> inputs;        // per-view encoder inputs (raw or imputed)
  std::vector<Mat> targets;       // per-view reconstruction targets
  MaskMatrix participation;       // (i, v) rows joining representation losses
  MaskMatrix target_observed;     // (i, v) rows scoring reconstruction
  bool imputed = false;
  std::vector<ImputationRecord> imputation_records;

  std::vector<EpochRecord> history;
  int epoch_counter = 0;

  std::vector<Mat*> tensors();                 // adam ordering: nets then Z
  std::vector<std::string> tensor_names() const;
};

/// Step 1 of the algorithm: joint full-batch pretraining of encoders,
/// decoders, cluster head, and Z against the combined representation loss.
TrainState step_one(const MultiViewDataset& dataset, const PairingMask& mask,
                    const TrainConfig& config);

/// Reconstruction loss of a single view over its scored rows.
double per_view_loss(const TrainState& state, int view);

/// w = softmax(-alpha * losses), computed with a max shift.
Vec update_view_weights(const Vec& losses, double alpha);

/// Step 3: alternate one representation epoch and one view-weighted epoch
/// per outer iteration, refreshing the weights every iteration.
TrainResult step_three(TrainState& state, const Vec& initial_weights,
                       const TrainConfig& config);

/// Full pipeline: step_one -> knn imputation -> step_three.
TrainResult train(const MultiViewDataset& dataset, const PairingMask& mask,
                  const TrainConfig& config);

}  // namespace pvcmc
