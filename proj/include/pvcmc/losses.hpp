#pragma once

#include "pvcmc/autodiff.hpp"
#include "pvcmc/common.hpp"
#include "pvcmc/dataio.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace pvcmc {

template <typename Scalar>
struct Hyperparameters {
  Scalar lambda1 = Scalar(0.001);  // self-expression trade-off
  Scalar lambda2 = Scalar(0.001);  // contrastive trade-off
  Scalar lambda3 = Scalar(0.001);  // clustering-loss trade-off
  Scalar tau = Scalar(0.5);        // contrastive temperature
  Scalar alpha = Scalar(1.0);      // view-weight sharpness
  Index k_latent = 10;
  int n_clusters = 2;
  bool enable_probability_alignment = false;
  Scalar log_eps = Scalar(1e-12);

  void check() const {
    require(lambda1 >= Scalar(0) && lambda2 >= Scalar(0) && lambda3 >= Scalar(0),
            "hyperparameters: trade-off weights must be non-negative");
    require(tau > Scalar(0), "hyperparameters: temperature must be positive");
    require(alpha > Scalar(0), "hyperparameters: alpha must be positive");
    require(k_latent >= 1, "hyperparameters: latent dimension must be positive");
    require(n_clusters >= 2, "hyperparameters: need at least two clusters");
  }
};

/// Per-term loss values for one forward pass. `total` follows
/// re + lambda1*se + lambda2*mcl + lambda3*(feature_align + entropy_reg),
/// with prob_align joining the lambda3 group only when enabled.
template <typename Scalar>
struct LossBreakdown {
  Scalar re = 0;
  Scalar se = 0;
  Scalar mcl = 0;
  Scalar feature_align = 0;
  Scalar prob_align = 0;
  Scalar entropy_reg = 0;
  Scalar total = 0;
};

/// Temperature-scaled contrastive loss over stacked representations.
///
/// `stacked` holds one representation per row; positives[i] lists the rows
/// forming B(row i) (same sample seen from other views). Rows with an empty
/// list only serve as negatives. Cosine similarity via row normalization;
/// the denominator for each anchor runs over every other row. Returns the
/// negated mean per-anchor log-ratio so that minimization pulls positive
/// pairs together.
template <typename Scalar>
ad::Var contrastive_loss(ad::Tape<Scalar>& tape, ad::Var stacked,
                         const std::vector<std::vector<int>>& positives, Scalar tau) {
  require(tau > Scalar(0), "contrastive_loss: temperature must be positive");
  const Index m = tape.value(stacked).rows();
  require(static_cast<Index>(positives.size()) == m,
          "contrastive_loss: positives size must match row count");
  require(m >= 2, "contrastive_loss: need at least two representations");

  Index n_anchors = 0;
  for (const auto& set : positives)
    if (!set.empty()) ++n_anchors;
  require(n_anchors >= 1, "contrastive_loss: no anchor has a positive");

  MatrixX<Scalar> positive_weights = MatrixX<Scalar>::Zero(m, m);
  MatrixX<Scalar> anchor_weights = MatrixX<Scalar>::Zero(m, 1);
  for (Index i = 0; i < m; ++i) {
    const auto& set = positives[static_cast<std::size_t>(i)];
    if (set.empty()) continue;
    anchor_weights(i, 0) = Scalar(1) / static_cast<Scalar>(n_anchors);
    for (int j : set) {
      require(j >= 0 && j < m && j != i, "contrastive_loss: bad positive index");
      positive_weights(i, j) +=
          Scalar(1) / (static_cast<Scalar>(n_anchors) * static_cast<Scalar>(set.size()));
    }
  }

  ad::Var normalized = tape.row_l2_normalize(stacked);
  ad::Var sims = tape.scale(tape.matmul_bt(normalized, normalized), Scalar(1) / tau);
  ad::Var log_denominators = tape.row_lse_offdiag(sims);
  ad::Var positive_part = tape.sum(tape.mul_const(sims, positive_weights));
  ad::Var denominator_part = tape.sum(tape.mul_const(log_denominators, anchor_weights));
  return tape.sub(denominator_part, positive_part);
}

/// ||H - Z H||_F^2 + lambda1 * sum_j ||Z col j||_2, with diag(Z) pinned to 0.
template <typename Scalar>
ad::Var self_expression_loss(ad::Tape<Scalar>& tape, ad::Var h, ad::Var z, Scalar lambda1) {
  const auto& zv = tape.value(z);
  require(zv.rows() == zv.cols(), "self_expression_loss: Z must be square");
  require(zv.rows() == tape.value(h).rows(),
          "self_expression_loss: Z size must match sample count");
  for (Index i = 0; i < zv.rows(); ++i)
    if (zv(i, i) != Scalar(0))
      throw InvalidArgument("self_expression_loss: nonzero diagonal at " + std::to_string(i));
  ad::Var residual = tape.sub(h, tape.matmul(z, h));
  return tape.add(tape.sum_squares(residual), tape.scale(tape.col_norm_sum(z), lambda1));
}

/// Squared reconstruction error accumulated over rows observed in each view.
template <typename Scalar>
ad::Var reconstruction_loss(ad::Tape<Scalar>& tape, const std::vector<ad::Var>& reconstructed,
                            const std::vector<MatrixX<Scalar>>& originals,
                            const PairingMask& mask) {
  require(reconstructed.size() == originals.size(),
          "reconstruction_loss: view count mismatch");
  require(static_cast<int>(originals.size()) == mask.n_views(),
          "reconstruction_loss: mask view count mismatch");
  ad::Var total = tape.constant(MatrixX<Scalar>::Zero(1, 1));
  for (std::size_t v = 0; v < originals.size(); ++v) {
    const auto& xhat = tape.value(reconstructed[v]);
    require(xhat.rows() == originals[v].rows() && xhat.cols() == originals[v].cols(),
            "reconstruction_loss: shape mismatch in view " + std::to_string(v));
    const auto rows = mask.observed_rows(static_cast<int>(v));
    if (rows.empty()) continue;
    ad::Var diff = tape.sub(reconstructed[v], tape.constant(originals[v]));
    total = tape.add(total, tape.sum_squares(tape.gather_rows(diff, rows)));
  }
  return total;
}

/// Cross-view agreement on l2-normalized features: for each ordered view
/// pair, same-sample dot products are rewarded and cross-sample dot products
/// penalized over the pair's co-observed rows.
template <typename Scalar>
ad::Var feature_alignment_loss(ad::Tape<Scalar>& tape, const std::vector<ad::Var>& latents,
                               const PairingMask& mask) {
  require(latents.size() >= 2, "feature_alignment_loss: need at least two views");
  ad::Var total = tape.constant(MatrixX<Scalar>::Zero(1, 1));
  bool any_pair = false;
  for (std::size_t p = 0; p < latents.size(); ++p) {
    for (std::size_t q = 0; q < latents.size(); ++q) {
      if (p == q) continue;
      const auto rows = mask.coobserved_rows(static_cast<int>(p), static_cast<int>(q));
      if (rows.size() < 2) continue;
      any_pair = true;
      const Scalar nt = static_cast<Scalar>(rows.size());
      ad::Var fp = tape.row_l2_normalize(tape.gather_rows(latents[p], rows));
      ad::Var fq = tape.row_l2_normalize(tape.gather_rows(latents[q], rows));
      ad::Var same = ad::dot(tape, fp, fq);
      ad::Var ones = tape.constant(MatrixX<Scalar>::Ones(1, static_cast<Index>(rows.size())));
      ad::Var cross_all = ad::dot(tape, tape.matmul(ones, fp), tape.matmul(ones, fq));
      ad::Var cross = tape.sub(cross_all, same);
      ad::Var pair_term = tape.add(tape.scale(same, Scalar(-1) / nt),
                                   tape.scale(cross, Scalar(1) / (Scalar(2) * nt)));
      total = tape.add(total, pair_term);
    }
  }
  if (!any_pair)
    throw InvalidArgument("feature_alignment_loss: fewer than 2 co-observed samples in every pair");
  return total;
}

/// Symmetrized KL divergence between per-view assignment distributions,
/// summed over unordered view pairs and their co-observed samples.
template <typename Scalar>
ad::Var probability_alignment_loss(ad::Tape<Scalar>& tape, const std::vector<ad::Var>& probs,
                                   const PairingMask& mask, Scalar log_eps) {
  require(probs.size() >= 2, "probability_alignment_loss: need at least two views");
  for (std::size_t v = 0; v < probs.size(); ++v) {
    const auto& q = tape.value(probs[v]);
    for (Index i = 0; i < q.rows(); ++i)
      if (std::abs(q.row(i).sum() - Scalar(1)) > Scalar(1e-6))
        throw InvalidArgument("probability_alignment_loss: non-normalized row " +
                              std::to_string(i) + " in view " + std::to_string(v));
  }
  ad::Var total = tape.constant(MatrixX<Scalar>::Zero(1, 1));
  for (std::size_t p = 0; p < probs.size(); ++p) {
    for (std::size_t q = p + 1; q < probs.size(); ++q) {
      const auto rows = mask.coobserved_rows(static_cast<int>(p), static_cast<int>(q));
      if (rows.empty()) continue;
      ad::Var qp = tape.gather_rows(probs[p], rows);
      ad::Var qq = tape.gather_rows(probs[q], rows);
      ad::Var log_ratio = tape.sub(tape.log_clamped(qp, log_eps), tape.log_clamped(qq, log_eps));
      ad::Var kl_pq = tape.sum(tape.hadamard(qp, log_ratio));
      ad::Var kl_qp = tape.sum(tape.hadamard(qq, ad::neg(tape, log_ratio)));
      total = tape.add(total, tape.scale(tape.add(kl_pq, kl_qp), Scalar(0.5)));
    }
  }
  return total;
}

/// Negative entropy of the mean assignment per view; drives the average
/// cluster usage away from collapse. Each view's term lies in [-log K, 0].
template <typename Scalar>
ad::Var entropy_regularization(ad::Tape<Scalar>& tape, const std::vector<ad::Var>& probs,
                               Scalar log_eps) {
  require(!probs.empty(), "entropy_regularization: no views");
  ad::Var total = tape.constant(MatrixX<Scalar>::Zero(1, 1));
  for (const ad::Var& q : probs) {
    const Index rows = tape.value(q).rows();
    require(rows >= 1, "entropy_regularization: empty probability matrix");
    ad::Var ones = tape.constant(MatrixX<Scalar>::Ones(1, rows));
    ad::Var mean_assignment = tape.scale(tape.matmul(ones, q), Scalar(1) / static_cast<Scalar>(rows));
    total = tape.add(
        total, tape.sum(tape.hadamard(mean_assignment, tape.log_clamped(mean_assignment, log_eps))));
  }
  return total;
}

template <typename Scalar>
struct LossTerms {
  ad::Var re;
  ad::Var se;
  ad::Var mcl;
  ad::Var feature_align;
  ad::Var prob_align;
  ad::Var entropy_reg;
};

/// Weighted combination of the individual terms plus the value breakdown.
template <typename Scalar>
std::pair<ad::Var, LossBreakdown<Scalar>> total_loss(ad::Tape<Scalar>& tape,
                                                     const LossTerms<Scalar>& terms,
                                                     const Hyperparameters<Scalar>& hp) {
  ad::Var clustering = tape.add(terms.feature_align, terms.entropy_reg);
  if (hp.enable_probability_alignment) clustering = tape.add(clustering, terms.prob_align);
  ad::Var total = tape.add(
      tape.add(terms.re, tape.scale(terms.se, hp.lambda1)),
      tape.add(tape.scale(terms.mcl, hp.lambda2), tape.scale(clustering, hp.lambda3)));

  LossBreakdown<Scalar> breakdown;
  breakdown.re = tape.scalar(terms.re);
  breakdown.se = tape.scalar(terms.se);
  breakdown.mcl = tape.scalar(terms.mcl);
  breakdown.feature_align = tape.scalar(terms.feature_align);
  breakdown.prob_align = tape.scalar(terms.prob_align);
  breakdown.entropy_reg = tape.scalar(terms.entropy_reg);
  breakdown.total = tape.scalar(total);
  return {total, breakdown};
}

}  // namespace pvcmc
