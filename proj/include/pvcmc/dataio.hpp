#pragma once

#include "pvcmc/common.hpp"
#include "pvcmc/rng.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pvcmc {

struct ViewMatrix {
  Mat values;  // n x d_v, rows are samples
  int view_id = 0;
};

struct MultiViewDataset {
  std::vector<ViewMatrix> views;
  std::optional<IVec> labels;

  Index n_samples() const { return views.empty() ? 0 : views.front().values.rows(); }
  int n_views() const { return static_cast<int>(views.size()); }
};

/// Checks the dataset invariants; throws InvalidArgument on violation.
inline void validate(const MultiViewDataset& dataset) {
  require(dataset.n_views() >= 2, "dataset: at least two views required");
  const Index n = dataset.n_samples();
  require(n >= 1, "dataset: empty views");
  for (const auto& view : dataset.views) {
    require(view.values.rows() == n, "dataset: views disagree on sample count");
    require(view.values.cols() >= 1, "dataset: view has no features");
    require_finite(view.values, "dataset view " + std::to_string(view.view_id));
  }
  if (dataset.labels) {
    require(dataset.labels->size() == n, "dataset: label count differs from sample count");
    require(dataset.labels->minCoeff() >= 0, "dataset: negative label");
  }
}

/// Per-sample, per-view observation flags realizing one paired fraction.
struct PairingMask {
  MaskMatrix observed;  // n x V
  double paired_fraction = 1.0;
  std::uint64_t seed = 0;

  Index n() const { return observed.rows(); }
  int n_views() const { return static_cast<int>(observed.cols()); }

  bool is_paired(Index i) const { return observed.row(i).all(); }

  Index paired_count() const {
    Index count = 0;
    for (Index i = 0; i < observed.rows(); ++i)
      if (is_paired(i)) ++count;
    return count;
  }

  std::vector<Index> paired_rows() const {
    std::vector<Index> rows;
    for (Index i = 0; i < observed.rows(); ++i)
      if (is_paired(i)) rows.push_back(i);
    return rows;
  }

  std::vector<Index> observed_rows(int view) const {
    std::vector<Index> rows;
    for (Index i = 0; i < observed.rows(); ++i)
      if (observed(i, view)) rows.push_back(i);
    return rows;
  }

  std::vector<Index> coobserved_rows(int view_a, int view_b) const {
    std::vector<Index> rows;
    for (Index i = 0; i < observed.rows(); ++i)
      if (observed(i, view_a) && observed(i, view_b)) rows.push_back(i);
    return rows;
  }
};

/// Exactly round(paired_fraction * n) rows stay fully observed (half-up
/// rounding); every other row drops exactly one view chosen uniformly.
inline PairingMask make_pairing_mask(Index n, double paired_fraction, int n_views,
                                     std::uint64_t seed) {
  require(paired_fraction > 0.0 && paired_fraction <= 1.0,
          "make_pairing_mask: paired_fraction must lie in (0, 1]");
  require(n >= 1, "make_pairing_mask: n must be positive");
  require(n_views >= 2, "make_pairing_mask: need at least two views");

  const Index n_paired =
      static_cast<Index>(std::floor(paired_fraction * static_cast<double>(n) + 0.5));

  PairingMask mask;
  mask.observed = MaskMatrix::Constant(n, n_views, true);
  mask.paired_fraction = paired_fraction;
  mask.seed = seed;

  Rng rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  for (Index r = n_paired; r < n; ++r) {
    const Index row = order[static_cast<std::size_t>(r)];
    const int dropped = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_views)));
    mask.observed(row, dropped) = false;
  }
  return mask;
}

enum class NormalizeMethod { kMinMax, kZScore, kNone };

/// Column-wise rescaling; constant columns map to zero under either method.
inline ViewMatrix normalize(const ViewMatrix& view, NormalizeMethod method) {
  ViewMatrix out = view;
  if (method == NormalizeMethod::kNone) return out;
  const Index n = view.values.rows();
  for (Index j = 0; j < view.values.cols(); ++j) {
    const auto col = view.values.col(j);
    if (method == NormalizeMethod::kMinMax) {
      const double lo = col.minCoeff();
      const double hi = col.maxCoeff();
      if (hi == lo)
        out.values.col(j).setZero();
      else
        out.values.col(j) = (col.array() - lo) / (hi - lo);
    } else {
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n));
      if (sd == 0.0)
        out.values.col(j).setZero();
      else
        out.values.col(j) = (col.array() - mean) / sd;
    }
  }
  return out;
}

/// Gaussian mixture with the component assignment shared across views.
/// Cluster centers sit on radial shells so any two centers are at least
/// `separation` apart; per-sample noise is unit isotropic.
inline MultiViewDataset generate_synthetic(int k_clusters, Index n,
                                           const std::vector<Index>& dims,
                                           double separation, std::uint64_t seed) {
  require(k_clusters >= 2, "generate_synthetic: k_clusters must be >= 2");
  require(n >= k_clusters, "generate_synthetic: n must be >= k_clusters");
  require(separation > 0.0, "generate_synthetic: separation must be positive");
  require(dims.size() >= 2, "generate_synthetic: need at least two views");

  Rng rng(seed);

  // Balanced labels (counts differ by at most one), then shuffled.
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % k_clusters);
  rng.shuffle(labels);

  MultiViewDataset dataset;
  int view_id = 0;
  for (const Index d : dims) {
    require(d >= 1, "generate_synthetic: view dimension must be positive");
    Mat centers(k_clusters, d);
    for (int c = 0; c < k_clusters; ++c) {
      Mat direction = rng.normal_matrix(1, d);
      double norm = direction.norm();
      while (norm == 0.0) {
        direction = rng.normal_matrix(1, d);
        norm = direction.norm();
      }
      centers.row(c) = direction / norm * separation * static_cast<double>(c + 1);
    }
    ViewMatrix view;
    view.view_id = view_id++;
    view.values = Mat(n, d);
    for (Index i = 0; i < n; ++i)
      view.values.row(i) =
          centers.row(labels[static_cast<std::size_t>(i)]) + rng.normal_matrix(1, d);
    dataset.views.push_back(std::move(view));
  }

  IVec label_vec(n);
  for (Index i = 0; i < n; ++i) label_vec[i] = labels[static_cast<std::size_t>(i)];
  dataset.labels = label_vec;
  validate(dataset);
  return dataset;
}

/// Loads the JSON manifest format:
///   {"views": ["a.csv", ...], "labels": "labels.csv"|null,
///    "normalize": "minmax"|"zscore"|"none"}
/// View files are headerless CSV, one sample per row; the label file has one
/// integer per line. Errors carry the offending file and row.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes view CSVs (17 significant digits), the optional label file, and a
/// manifest with normalize="none", so a reload is bit-exact.
std::filesystem::path save_dataset(const MultiViewDataset& dataset,
                                   const std::filesystem::path& directory,
                                   const std::string& stem);

}  // namespace pvcmc
