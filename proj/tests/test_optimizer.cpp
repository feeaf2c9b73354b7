#include <doctest.h>

#include <cmath>
#include <random>

#include "coconolab/optimizer.hpp"
#include "coconolab/synthetic.hpp"
#include "test_util.hpp"

using namespace coconolab;

namespace {

// Differentiable producer that ignores z: every latent yields the same bundle.
class ConstantProducer final : public AttentionProducer {
 public:
  ConstantProducer(AttentionBundle b, std::size_t dim) : b_(std::move(b)), dim_(dim) {}
  std::size_t dimension() const override { return dim_; }
  AttentionBundle evaluate(std::span<const double>) const override { return b_; }
  std::vector<double> vjp(std::span<const double>, const BundleCotangent&) const override {
    return std::vector<double>(dim_, 0.0);
  }

 private:
  AttentionBundle b_;
  std::size_t dim_;
};

AttentionBundle bundle_at_zero(ScenarioKind kind) {
  SyntheticProducer p(make_scenario(kind, 2, 8));
  return p.evaluate(std::vector<double>(4, 0.0));
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("init params are standard normal and deterministic") {
  const auto p = init_params(4);
  CHECK(p.mu == std::vector<double>(4, 0.0));
  CHECK(p.sigma == std::vector<double>(4, 1.0));
  CHECK(init_params(4).mu == p.mu);
  for (std::size_t d : {1, 3, 17}) CHECK(kl_gaussian(init_params(d)) == 0.0);
}

TEST_CASE("latent composition is mu + sigma * eps") {
  const NoiseParams p{{1.0, -2.0}, {0.5, 2.0}};
  const auto s = LatentSample::compose(p, {2.0, 0.25});
  CHECK(s.z == std::vector<double>{2.0, -1.5});
  CHECK(s.base_noise == std::vector<double>{2.0, 0.25});
}

TEST_CASE("a kl-only step moves mu toward zero") {
  SyntheticProducer prod(make_scenario(ScenarioKind::aligned, 2, 8));
  const NoiseParams p{std::vector<double>(4, 1.0), std::vector<double>(4, 1.0)};
  AdamState adam(4);
  const auto res = step(prod, p, std::vector<double>(4, 0.3), LossWeights{0, 0, 1}, adam, OptimizerConfig{});
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(res.params.mu[d] < 1.0);
    CHECK(res.params.mu[d] > 0.0);
    CHECK(res.params.sigma[d] == 1.0);
  }
  CHECK(adam.t == 1);
  CHECK(res.report.l_kl == 0.5);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  NoiseParams p{{0.3, -0.2}, {1.5, 0.7}};
  const NoiseParams before = p;
  AdamState adam(2);
  adam_update(p, ParamGradient{{0, 0}, {0, 0}}, adam, OptimizerConfig{});
  CHECK(p.mu == before.mu);
  CHECK(p.sigma == before.sigma);
  CHECK(adam.t == 1);
}

TEST_CASE("sigma is clamped at the floor") {
  NoiseParams p{{0.0}, {1e-4}};
  AdamState adam(1);
  adam_update(p, ParamGradient{{0.0}, {10.0}}, adam, OptimizerConfig{});
  CHECK(p.sigma[0] == 1e-4);
}

TEST_CASE("analytic gradient matches finite differences through the producer") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto kind : {ScenarioKind::aligned, ScenarioKind::interference, ScenarioKind::neglect})
    for (int trial = 0; trial < 3; ++trial) {
      SyntheticProducer prod(make_scenario(kind, 2, 8));
      NoiseParams p = init_params(4);
      std::vector<double> eps(4);
      for (std::size_t d = 0; d < 4; ++d) {
        eps[d] = normal(rng);
        p.mu[d] = 0.5 * normal(rng);
        p.sigma[d] = std::exp(0.25 * normal(rng));
      }
      const LossWeights w;
      const auto g = param_gradient(prod, p, eps, w);
      const auto fd = finite_diff_gradient(prod, p, eps, w, 1e-5);
      CHECK(rel_err(g.mu, fd.mu) < 1e-4);
      CHECK(rel_err(g.sigma, fd.sigma) < 1e-4);
    }
}

TEST_CASE("finite differences reproduce the closed-form kl gradient") {
  SyntheticProducer prod(make_scenario(ScenarioKind::aligned, 2, 8));
  const NoiseParams p{{0.5, -1.0, 2.0, 0.0}, {0.5, 1.0, 1.5, 3.0}};
  const std::vector<double> eps(4, 0.1);
  const auto fd = finite_diff_gradient(prod, p, eps, LossWeights{0, 0, 1}, 1e-4);
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(fd.mu[d] == doctest::Approx(p.mu[d] / 4).epsilon(1e-8));
    CHECK(fd.sigma[d] == doctest::Approx((p.sigma[d] - 1 / p.sigma[d]) / 4).epsilon(1e-6));
  }
}

TEST_CASE("finite differences guard sigma near the floor") {
  SyntheticProducer prod(make_scenario(ScenarioKind::aligned, 2, 8));
  const NoiseParams p{{0, 0, 0, 0}, {1e-4, 1, 1, 1}};
  const std::vector<double> eps(4, 0.0);
  CHECK_THROWS_AS_CODE(finite_diff_gradient(prod, p, eps, LossWeights{}, 1e-5, {}, false, 1e-4),
                       ErrorCode::invalid_argument);
  const auto fd = finite_diff_gradient(prod, p, eps, LossWeights{}, 1e-5, {}, true, 1e-4);
  CHECK(fd.sigma_skipped == std::vector<bool>{true, false, false, false});
  CHECK(fd.sigma[0] == 0.0);
}

TEST_CASE("a producer already at the thresholds converges immediately") {
  ConstantProducer prod(bundle_at_zero(ScenarioKind::aligned), 4);
  const auto res = optimize(prod, LossWeights{}, OptimizerConfig{});
  CHECK(res.converged);
  CHECK(res.rounds_used == 1);
  CHECK(res.trace.size() == 1);
  CHECK(res.best_step == 0);
}

TEST_CASE("a constant loss runs every round to the step cap") {
  ConstantProducer prod(bundle_at_zero(ScenarioKind::neglect), 4);
  OptimizerConfig cfg;
  cfg.max_rounds = 3;
  cfg.max_steps_per_round = 12;
  cfg.stall_window = 12;
  const auto res = optimize(prod, LossWeights{1, 1, 0}, cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.rounds_used == 3);
  CHECK(res.trace.size() == 36);
  CHECK(res.best_round == 0);
  CHECK(res.best_step == 0);
}

TEST_CASE("with the default window a constant loss stalls after window + 1 steps") {
  ConstantProducer prod(bundle_at_zero(ScenarioKind::neglect), 4);
  const auto res = optimize(prod, LossWeights{1, 1, 0}, OptimizerConfig{});
  CHECK(res.rounds_used == 5);
  CHECK(res.trace.size() == 5 * 11);
}

TEST_CASE("best report is the minimum total over the trace") {
  SyntheticProducer prod(make_scenario(ScenarioKind::interference, 2, 8));
  OptimizerConfig cfg;
  cfg.max_rounds = 2;
  cfg.max_steps_per_round = 20;
  const auto res = optimize(prod, LossWeights{}, cfg);
  double best = res.trace.front().total;
  for (const auto& e : res.trace) best = std::min(best, e.total);
  CHECK(res.best_report.total == best);
  const auto& at = res.trace[0];
  CHECK(at.round == 0);
  bool found = false;
  for (const auto& e : res.trace) found |= e.round == res.best_round && e.step == res.best_step && e.total == best;
  CHECK(found);
  const auto again = evaluate_params(prod, res.best_params, res.best_latent.base_noise, LossWeights{});
  CHECK(again.report.total == res.best_report.total);
}

TEST_CASE("optimization is deterministic for a fixed seed") {
  SyntheticProducer prod(make_scenario(ScenarioKind::neglect, 2, 8));
  OptimizerConfig cfg;
  cfg.rng_seed = 7;
  cfg.max_rounds = 2;
  const auto a = optimize(prod, LossWeights{}, cfg);
  const auto b = optimize(prod, LossWeights{}, cfg);
  CHECK(a.trace == b.trace);
  CHECK(a.best_latent.z == b.best_latent.z);
}

TEST_CASE("initial report is taken at z = 0") {
  SyntheticProducer prod(make_scenario(ScenarioKind::neglect, 2, 8));
  const auto res = optimize(prod, LossWeights{}, OptimizerConfig{});
  CHECK(res.initial_report.l_complete == 1.0);
  CHECK(res.initial_report.l_kl == 0.0);
}

TEST_CASE("non-differentiable producers get a single evaluation") {
  FixedBundleProducer prod(bundle_at_zero(ScenarioKind::neglect), 4);
  const auto res = optimize(prod, LossWeights{}, OptimizerConfig{});
  CHECK(res.trace.size() == 1);
  CHECK_FALSE(res.converged);
}

TEST_CASE("config validation") {
  SyntheticProducer prod(make_scenario(ScenarioKind::aligned, 2, 8));
  OptimizerConfig cfg;
  cfg.learning_rate = -1;
  CHECK_THROWS_AS_CODE(optimize(prod, LossWeights{}, cfg), ErrorCode::invalid_argument);
  cfg = OptimizerConfig{};
  cfg.sigma_floor = 0.0;
  CHECK_THROWS_AS_CODE(optimize(prod, LossWeights{}, cfg), ErrorCode::invalid_argument);
}

}  // TEST_SUITE
