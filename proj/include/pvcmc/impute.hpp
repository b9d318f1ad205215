#pragma once

#include "pvcmc/common.hpp"
#include "pvcmc/dataio.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace pvcmc {

struct ImputationRecord {
  Index sample = 0;
  int missing_view = 0;
  std::vector<Index> neighbors;  // paired-sample indices, nearest first
};

struct ImputationResult {
  std::vector<ViewMatrix> completed_views;
  std::vector<ImputationRecord> records;
  int k = 0;
};

/// Fills missing views from the k nearest paired samples.
///
/// For a sample missing view m, neighbors are the paired samples closest in
/// the latent space of its lowest-index observed view (Euclidean, ties to the
/// lower sample index); the imputed row is the mean of their view-m feature
/// rows. Observed entries pass through untouched.
inline ImputationResult knn_impute(const MultiViewDataset& dataset, const PairingMask& mask,
                                   const std::vector<Mat>& embeddings, int k,
                                   bool distance_weighted = false) {
  require(k >= 1, "knn_impute: k must be at least 1");
  require(static_cast<int>(embeddings.size()) == dataset.n_views(),
          "knn_impute: embedding count must match view count");
  require(mask.n() == dataset.n_samples() && mask.n_views() == dataset.n_views(),
          "knn_impute: mask shape mismatch");
  for (int v = 0; v < dataset.n_views(); ++v)
    require(embeddings[static_cast<std::size_t>(v)].rows() == dataset.n_samples(),
            "knn_impute: embedding rows must match sample count");

  const std::vector<Index> paired = mask.paired_rows();

  ImputationResult result;
  result.k = k;
  result.completed_views = dataset.views;

  for (Index i = 0; i < dataset.n_samples(); ++i) {
    if (mask.is_paired(i)) continue;
    if (static_cast<Index>(paired.size()) < k)
      throw InvalidArgument("knn_impute: only " + std::to_string(paired.size()) +
                            " paired samples but k=" + std::to_string(k));

    int observed_view = -1;
    for (int v = 0; v < mask.n_views(); ++v) {
      if (mask.observed(i, v)) {
        observed_view = v;
        break;
      }
    }
    require(observed_view >= 0, "knn_impute: sample " + std::to_string(i) + " has no views");

    const Mat& space = embeddings[static_cast<std::size_t>(observed_view)];
    std::vector<std::pair<double, Index>> ranked;
    ranked.reserve(paired.size());
    for (const Index j : paired)
      ranked.emplace_back((space.row(i) - space.row(j)).norm(), j);
    std::sort(ranked.begin(), ranked.end());

    std::vector<Index> neighbors(static_cast<std::size_t>(k));
    for (int r = 0; r < k; ++r) neighbors[static_cast<std::size_t>(r)] = ranked[static_cast<std::size_t>(r)].second;

    Vec weights = Vec::Constant(k, 1.0 / static_cast<double>(k));
    if (distance_weighted) {
      for (int r = 0; r < k; ++r) weights[r] = 1.0 / (ranked[static_cast<std::size_t>(r)].first + 1e-12);
      weights /= weights.sum();
    }

    for (int m = 0; m < mask.n_views(); ++m) {
      if (mask.observed(i, m)) continue;
      auto& view = result.completed_views[static_cast<std::size_t>(m)];
      RowVec filled = RowVec::Zero(view.values.cols());
      for (int r = 0; r < k; ++r)
        filled += weights[r] * dataset.views[static_cast<std::size_t>(m)].values.row(
                                   neighbors[static_cast<std::size_t>(r)]);
      view.values.row(i) = filled;
      result.records.push_back({i, m, neighbors});
    }
  }
  return result;
}

}  // namespace pvcmc
