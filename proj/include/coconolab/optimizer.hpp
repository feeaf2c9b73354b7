#pragma once

// Reparameterized initial-noise optimization: z = μ + σ⊙ε with (μ, σ) updated
// by Adam, restarts with fresh ε on stall, and a cache of the best latent seen.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coconolab/losses.hpp"
#include "coconolab/producer.hpp"

namespace coconolab {

struct LatentSample {
  std::vector<double> base_noise;  // ε, fixed within a round
  std::vector<double> z;           // μ + σ⊙ε

  static LatentSample compose(const NoiseParams& params, std::vector<double> base_noise);
};

struct OptimizerConfig {
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t max_steps_per_round = 50;
  std::size_t max_rounds = 5;
  std::size_t stall_window = 10;
  double stall_min_decrease = 1e-3;
  double success_complete = 0.2;  // l_complete at or below
  double success_contrast = 0.1;  // l_contrast at or below
  double sigma_floor = 1e-4;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct AdamState {
  std::vector<double> m_mu, v_mu, m_sigma, v_sigma;
  std::size_t t = 0;

  explicit AdamState(std::size_t dim = 0)
      : m_mu(dim, 0.0), v_mu(dim, 0.0), m_sigma(dim, 0.0), v_sigma(dim, 0.0) {}
};

struct ParamGradient {
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct StepResult {
  NoiseParams params;  // after the update
  LossReport report;   // at the parameters the step started from
  ParamGradient gradient;
};

NoiseParams init_params(std::size_t dim);

/// Loss evaluation at z = μ + σ⊙ε.
LossEvaluation evaluate_params(const AttentionProducer& producer, const NoiseParams& params,
                               std::span<const double> base_noise, const LossWeights& weights,
                               const LossConfig& loss_cfg = {});

/// Analytic gradient of the weighted total w.r.t. (μ, σ), chained through the
/// producer's vector-Jacobian product. The evaluation it was taken at is
/// returned through `eval` when non-null.
ParamGradient param_gradient(const AttentionProducer& producer, const NoiseParams& params,
                             std::span<const double> base_noise, const LossWeights& weights,
                             const LossConfig& loss_cfg = {}, LossEvaluation* eval = nullptr);

/// One Adam descent step on (μ, σ); σ is clamped to the configured floor.
/// Throws non_finite when the gradient is not finite.
StepResult step(const AttentionProducer& producer, const NoiseParams& params, std::span<const double> base_noise,
                const LossWeights& weights, AdamState& adam, const OptimizerConfig& cfg,
                const LossConfig& loss_cfg = {});

void adam_update(NoiseParams& params, const ParamGradient& grad, AdamState& adam, const OptimizerConfig& cfg);

struct FiniteDiffGradient {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<bool> sigma_skipped;  // σ_d − h below the floor; entry left at 0
};

/// Central differences of the weighted total w.r.t. every μ and σ element.
/// A σ perturbation is invalid when σ_d − h ≤ 0 or σ_d − h < sigma_floor; that
/// throws invalid_argument unless skip_invalid_sigma is set.
FiniteDiffGradient finite_diff_gradient(const AttentionProducer& producer, const NoiseParams& params,
                                        std::span<const double> base_noise, const LossWeights& weights,
                                        double h, const LossConfig& loss_cfg = {},
                                        bool skip_invalid_sigma = false, double sigma_floor = 0.0);

struct TraceEntry {
  std::size_t round = 0;
  std::size_t step = 0;
  double l_contrast = 0.0;
  double l_complete = 0.0;
  double l_kl = 0.0;
  double total = 0.0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct OptimizationResult {
  NoiseParams best_params;
  LatentSample best_latent;
  LossReport best_report;
  LossReport initial_report;  // at z = μ₀ = 0, before any sampling
  std::vector<TraceEntry> trace;
  std::size_t rounds_used = 0;
  std::size_t best_round = 0;
  std::size_t best_step = 0;
  bool converged = false;
  std::vector<std::string> notices;  // rounds aborted on degenerate input
};

bool meets_thresholds(const LossReport& report, const OptimizerConfig& cfg) noexcept;

OptimizationResult optimize(const AttentionProducer& producer, const LossWeights& weights,
                            const OptimizerConfig& cfg, const LossConfig& loss_cfg = {});

}  // namespace coconolab
