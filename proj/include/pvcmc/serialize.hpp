#pragma once

#include "pvcmc/common.hpp"
#include "pvcmc/spectral.hpp"
#include "pvcmc/trainer.hpp"

#include <filesystem>
#include <string>

namespace pvcmc {

/// Shape-tagged JSON checkpoint of every trained tensor (nets plus Z).
/// Values serialize as decimal doubles that reload bit-exactly.
void save_checkpoint(const TrainResult& result, const std::filesystem::path& path);

/// Restores parameters and Z from save_checkpoint output.
struct Checkpoint {
  ParameterSet params;
  Mat z;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Per-epoch run log: epoch, phase, per-view losses, weights, breakdown.
std::string history_csv(const TrainResult& result);

/// Neighbor audit: sample_id, missing_view, neighbor ids.
std::string imputation_csv(const TrainResult& result);

/// Eigenvalues and embedding rows of the spectral step, for diagnostics.
std::string spectral_csv(const EigenPairs<double>& pairs);

void write_text_file(const std::filesystem::path& path, const std::string& content);

std::string matrix_csv(const Mat& m);

}  // namespace pvcmc
