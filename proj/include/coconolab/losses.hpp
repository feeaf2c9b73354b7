#pragma once

// Attention-contrast, attention-complete and KL losses over one evaluation of
// an attention producer, plus their analytic gradients.

#include <cstddef>
#include <optional>
#include <vector>

#include "coconolab/assignment.hpp"
#include "coconolab/attention.hpp"
#include "coconolab/producer.hpp"

namespace coconolab {

// Per-element Gaussian parameters of the initial latent.
struct NoiseParams {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t dimension() const noexcept { return mu.size(); }
  void validate() const;
};

struct LossWeights {
  double contrast = 1.0;
  double complete = 1.0;
  double kl = 500.0;

  void validate() const;
};

struct LossConfig {
  double alpha = 16.0;
  double beta = 0.5;
  // nullopt skips smoothing and the max-1 rescale entirely.
  std::optional<SmoothingConfig> smoothing = SmoothingConfig{};
  PcaOptions pca;
};

enum class PcaSign { principal, inverted };

const char* pca_sign_name(PcaSign sign) noexcept;

struct LossReport {
  double l_contrast = 0.0;
  double l_complete = 0.0;
  double l_kl = 0.0;
  double total = 0.0;
  PcaSign pca_sign_chosen = PcaSign::principal;
  std::size_t n = 0;
  // (i, k): off-diagonal assigned overlap of segment i normalized by its mass;
  // the diagonal is zero.
  std::vector<double> interference_table;
  // Diagonal ratios, one per segment (0 for empty segments).
  std::vector<double> coverage;
  std::vector<std::size_t> assignment;
  std::vector<double> segment_masses;
  std::size_t components_found = 0;
  double threshold = 0.0;
};

// The full pipeline for one PCA sign.
struct SignEvaluation {
  PcaSign sign = PcaSign::principal;
  SaliencyMap softened;
  double threshold = 0.0;
  SegmentSet segments;
  CostMatrix cost;
  AssignmentMatrix assignment;
  double contrast = 0.0;
  double complete = 0.0;
};

// A report together with the intermediates the backward pass and rendering use.
struct LossEvaluation {
  LossReport report;
  CrossAttentionStack smoothed_cross;
  PrincipalMaps principal;
  SignEvaluation chosen;
  SignEvaluation other;
};

/// Σ over off-diagonal matched-pair entries, each divided by its segment mass;
/// zero-mass segments contribute 0.
double attention_contrast(const AssignmentMatrix& assign, const CostMatrix& cost, const SegmentSet& segments);

/// 1 − minᵢ (assigned overlap of segment i / mass i), with 0/0 read as 0.
double attention_complete(const AssignmentMatrix& assign, const CostMatrix& cost, const SegmentSet& segments);

/// Mean over elements of KL(N(μ, σ²) ‖ N(0, 1)).
double kl_gaussian(const NoiseParams& params);

LossEvaluation evaluate_losses(const AttentionBundle& bundle, const NoiseParams& params,
                               const LossWeights& weights, const LossConfig& cfg = {});

inline LossReport total_loss(const AttentionBundle& bundle, const NoiseParams& params,
                             const LossWeights& weights, const LossConfig& cfg = {}) {
  return evaluate_losses(bundle, params, weights, cfg).report;
}

struct LossGradients {
  std::vector<Grid> smoothed_cross;  // w.r.t. the cross maps entering the cost
  Grid softened;                     // w.r.t. the chosen softened self map
  BundleCotangent bundle;            // chained back to the producer's outputs
  std::vector<double> mu;            // KL term only, weighted
  std::vector<double> sigma;
};

/// Gradients of the weighted total at a computed evaluation. Segment masks,
/// Otsu threshold, assignment and PCA sign are held fixed; the principal
/// direction itself is differentiated.
LossGradients loss_gradients(const AttentionBundle& bundle, const LossEvaluation& eval,
                             const NoiseParams& params, const LossWeights& weights,
                             const LossConfig& cfg = {});

}  // namespace coconolab
