#include "coconolab/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double total_at(const AttentionProducer& producer, const NoiseParams& params, std::span<const double> base_noise,
                const LossWeights& weights, const LossConfig& loss_cfg) {
  return evaluate_params(producer, params, base_noise, weights, loss_cfg).report.total;
}

TraceEntry trace_entry(std::size_t round, std::size_t step, const LossReport& rep) {
  return {round, step, rep.l_contrast, rep.l_complete, rep.l_kl, rep.total};
}

}  // namespace

LatentSample LatentSample::compose(const NoiseParams& params, std::vector<double> base_noise) {
  require(base_noise.size() == params.dimension(), ErrorCode::shape_mismatch,
          "base noise and parameter dimensions differ");
  LatentSample s;
  s.z.resize(base_noise.size());
  for (std::size_t d = 0; d < base_noise.size(); ++d) s.z[d] = params.mu[d] + params.sigma[d] * base_noise[d];
  s.base_noise = std::move(base_noise);
  return s;
}

void OptimizerConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::invalid_argument,
          "learning rate must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
          ErrorCode::invalid_argument, "Adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, ErrorCode::invalid_argument, "Adam epsilon must be positive");
  require(max_steps_per_round >= 1 && max_rounds >= 1 && stall_window >= 1, ErrorCode::invalid_argument,
          "step, round and stall-window counts must be positive");
  require(stall_min_decrease >= 0.0, ErrorCode::invalid_argument, "stall decrease must be nonnegative");
  require(success_complete >= 0.0 && success_complete <= 1.0, ErrorCode::invalid_argument,
          "complete-loss threshold must lie in [0, 1]");
  require(success_contrast >= 0.0, ErrorCode::invalid_argument, "contrast-loss threshold must be nonnegative");
  require(sigma_floor > 0.0, ErrorCode::invalid_argument, "sigma floor must be positive");
}

NoiseParams init_params(std::size_t dim) {
  require(dim >= 1, ErrorCode::invalid_argument, "latent dimension must be at least 1");
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

LossEvaluation evaluate_params(const AttentionProducer& producer, const NoiseParams& params,
                               std::span<const double> base_noise, const LossWeights& weights,
                               const LossConfig& loss_cfg) {
  params.validate();
  require(params.dimension() == producer.dimension(), ErrorCode::shape_mismatch,
          "parameter dimension does not match the producer");
  const auto latent = LatentSample::compose(params, {base_noise.begin(), base_noise.end()});
  return evaluate_losses(producer.evaluate(latent.z), params, weights, loss_cfg);
}

ParamGradient param_gradient(const AttentionProducer& producer, const NoiseParams& params,
                             std::span<const double> base_noise, const LossWeights& weights,
                             const LossConfig& loss_cfg, LossEvaluation* eval) {
  params.validate();
  require(params.dimension() == producer.dimension(), ErrorCode::shape_mismatch,
          "parameter dimension does not match the producer");
  require(producer.differentiable(), ErrorCode::producer_failure, "producer does not provide gradients");
  const auto latent = LatentSample::compose(params, {base_noise.begin(), base_noise.end()});
  const AttentionBundle bundle = producer.evaluate(latent.z);
  LossEvaluation ev = evaluate_losses(bundle, params, weights, loss_cfg);
  const LossGradients lg = loss_gradients(bundle, ev, params, weights, loss_cfg);
  const std::vector<double> g_z = producer.vjp(latent.z, lg.bundle);
  require(g_z.size() == params.dimension(), ErrorCode::producer_failure, "producer gradient has the wrong size");

  ParamGradient g;
  g.mu.resize(params.dimension());
  g.sigma.resize(params.dimension());
  for (std::size_t d = 0; d < params.dimension(); ++d) {
    g.mu[d] = g_z[d] + lg.mu[d];
    g.sigma[d] = g_z[d] * latent.base_noise[d] + lg.sigma[d];
  }
  if (eval) *eval = std::move(ev);
  return g;
}

void adam_update(NoiseParams& params, const ParamGradient& grad, AdamState& adam, const OptimizerConfig& cfg) {
  const std::size_t dim = params.dimension();
  require(grad.mu.size() == dim && grad.sigma.size() == dim && adam.m_mu.size() == dim, ErrorCode::shape_mismatch,
          "Adam state and gradient dimensions differ");
  ++adam.t;
  const double t = static_cast<double>(adam.t);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  auto apply = [&](std::vector<double>& x, const std::vector<double>& g, std::vector<double>& m,
                   std::vector<double>& v) {
    for (std::size_t d = 0; d < dim; ++d) {
      m[d] = cfg.adam_beta1 * m[d] + (1.0 - cfg.adam_beta1) * g[d];
      v[d] = cfg.adam_beta2 * v[d] + (1.0 - cfg.adam_beta2) * g[d] * g[d];
      x[d] -= cfg.learning_rate * (m[d] / c1) / (std::sqrt(v[d] / c2) + cfg.adam_eps);
    }
  };
  apply(params.mu, grad.mu, adam.m_mu, adam.v_mu);
  apply(params.sigma, grad.sigma, adam.m_sigma, adam.v_sigma);
  for (double& s : params.sigma) s = std::max(s, cfg.sigma_floor);
}

StepResult step(const AttentionProducer& producer, const NoiseParams& params, std::span<const double> base_noise,
                const LossWeights& weights, AdamState& adam, const OptimizerConfig& cfg,
                const LossConfig& loss_cfg) {
  LossEvaluation ev;
  StepResult out;
  out.gradient = param_gradient(producer, params, base_noise, weights, loss_cfg, &ev);
  require(all_finite(out.gradient.mu) && all_finite(out.gradient.sigma), ErrorCode::non_finite,
          "gradient is not finite");
  out.report = std::move(ev.report);
  out.params = params;
  adam_update(out.params, out.gradient, adam, cfg);
  return out;
}

FiniteDiffGradient finite_diff_gradient(const AttentionProducer& producer, const NoiseParams& params,
                                        std::span<const double> base_noise, const LossWeights& weights,
                                        double h, const LossConfig& loss_cfg, bool skip_invalid_sigma,
                                        double sigma_floor) {
  require(h > 0.0 && std::isfinite(h), ErrorCode::invalid_argument, "step size must be positive");
  params.validate();
  const std::size_t dim = params.dimension();
  FiniteDiffGradient out;
  out.mu.assign(dim, 0.0);
  out.sigma.assign(dim, 0.0);
  out.sigma_skipped.assign(dim, false);
  for (std::size_t d = 0; d < dim; ++d) {
    const double lower = params.sigma[d] - h;
    if (lower <= 0.0 || lower < sigma_floor) {
      require(skip_invalid_sigma, ErrorCode::invalid_argument,
              "sigma[" + std::to_string(d) + "] - h falls below the sigma floor");
      out.sigma_skipped[d] = true;
    }
  }
  NoiseParams probe = params;
  for (std::size_t d = 0; d < dim; ++d) {
    probe.mu[d] = params.mu[d] + h;
    const double up = total_at(producer, probe, base_noise, weights, loss_cfg);
    probe.mu[d] = params.mu[d] - h;
    const double down = total_at(producer, probe, base_noise, weights, loss_cfg);
    probe.mu[d] = params.mu[d];
    out.mu[d] = (up - down) / (2.0 * h);
  }
  for (std::size_t d = 0; d < dim; ++d) {
    if (out.sigma_skipped[d]) continue;
    probe.sigma[d] = params.sigma[d] + h;
    const double up = total_at(producer, probe, base_noise, weights, loss_cfg);
    probe.sigma[d] = params.sigma[d] - h;
    const double down = total_at(producer, probe, base_noise, weights, loss_cfg);
    probe.sigma[d] = params.sigma[d];
    out.sigma[d] = (up - down) / (2.0 * h);
  }
  return out;
}

bool meets_thresholds(const LossReport& report, const OptimizerConfig& cfg) noexcept {
  return report.l_complete <= cfg.success_complete && report.l_contrast <= cfg.success_contrast;
}

OptimizationResult optimize(const AttentionProducer& producer, const LossWeights& weights,
                            const OptimizerConfig& cfg, const LossConfig& loss_cfg) {
  cfg.validate();
  weights.validate();
  const std::size_t dim = producer.dimension();
  const NoiseParams start = init_params(dim);
  const std::vector<double> zero_noise(dim, 0.0);

  OptimizationResult res;
  res.initial_report = evaluate_params(producer, start, zero_noise, weights, loss_cfg).report;

  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  bool have_best = false;
  const bool differentiable = producer.differentiable();

  for (std::size_t round = 0; round < cfg.max_rounds && !res.converged; ++round) {
    res.rounds_used = round + 1;
    std::vector<double> eps(dim);
    for (double& e : eps) e = normal(rng);
    NoiseParams params = start;
    AdamState adam(dim);
    std::vector<double> running_best;  // min total within the round after each step

    for (std::size_t s = 0; s < cfg.max_steps_per_round; ++s) {
      LossReport rep;
      ParamGradient grad;
      try {
        if (differentiable) {
          LossEvaluation ev;
          grad = param_gradient(producer, params, eps, weights, loss_cfg, &ev);
          rep = std::move(ev.report);
        } else {
          rep = evaluate_params(producer, params, eps, weights, loss_cfg).report;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_input && e.code() != ErrorCode::convergence_failure &&
            e.code() != ErrorCode::non_finite)
          throw;
        res.notices.push_back("round " + std::to_string(round) + " step " + std::to_string(s) + ": " + e.what());
        break;
      }

      res.trace.push_back(trace_entry(round, s, rep));
      if (!have_best || rep.total < res.best_report.total) {
        have_best = true;
        res.best_report = rep;
        res.best_params = params;
        res.best_latent = LatentSample::compose(params, eps);
        res.best_round = round;
        res.best_step = s;
      }
      if (meets_thresholds(rep, cfg)) {
        res.converged = true;
        break;
      }
      running_best.push_back(running_best.empty() ? rep.total : std::min(running_best.back(), rep.total));
      if (s >= cfg.stall_window &&
          running_best[s - cfg.stall_window] - running_best[s] < cfg.stall_min_decrease)
        break;
      if (!differentiable) break;
      if (!all_finite(grad.mu) || !all_finite(grad.sigma)) {
        res.notices.push_back("round " + std::to_string(round) + " step " + std::to_string(s) +
                              ": gradient is not finite");
        break;
      }
      adam_update(params, grad, adam, cfg);
    }
    if (!differentiable) break;
  }
  require(have_best, ErrorCode::degenerate_input, "no round produced a valid evaluation");
  return res;
}

}  // namespace coconolab
