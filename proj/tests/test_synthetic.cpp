#include <doctest.h>

#include <cmath>
#include <random>

#include "coconolab/losses.hpp"
#include "coconolab/synthetic.hpp"
#include "test_util.hpp"

using namespace coconolab;

TEST_SUITE("synthetic") {

TEST_CASE("scenario names round-trip") {
  for (auto k : {ScenarioKind::neglect, ScenarioKind::interference, ScenarioKind::aligned, ScenarioKind::custom})
    CHECK(parse_scenario_kind(scenario_kind_name(k)) == k);
  CHECK_THROWS_AS_CODE(parse_scenario_kind("bogus"), ErrorCode::invalid_argument);
}

TEST_CASE("built-in scenarios default to two latent coordinates per subject") {
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto spec = make_scenario(ScenarioKind::interference, n, 8);
    CHECK(spec.latent_dim == 2 * n);
    CHECK(spec.blobs.size() == n);
  }
  CHECK(make_scenario(ScenarioKind::aligned, 2, 8, 10).latent_dim == 10);
}

TEST_CASE("bundles are valid with the expected shapes") {
  for (auto k : {ScenarioKind::neglect, ScenarioKind::interference, ScenarioKind::aligned}) {
    SyntheticProducer p(make_scenario(k, 3, 12));
    const auto b = p.evaluate(std::vector<double>(6, 0.4));
    CHECK_NOTHROW(b.validate());
    CHECK(b.cross.n() == 3);
    CHECK(b.cross.r == 12);
    CHECK(b.self.values.size() == 144u * 144u);
    for (std::size_t j = 0; j < 3; ++j) CHECK(b.cross.maps[j].max() <= 1.0);
    for (std::size_t a = 0; a < 144; ++a)
      for (std::size_t c = 0; c < a; ++c) CHECK(b.self(a, c) == b.self(c, a));
  }
}

TEST_CASE("aligned at z = 0 has near-zero contrast and small incompleteness") {
  SyntheticProducer p(make_scenario(ScenarioKind::aligned, 2, 8));
  const auto rep = total_loss(p.evaluate(std::vector<double>(4, 0.0)),
                              NoiseParams{std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)}, LossWeights{});
  CHECK(rep.l_contrast < 1e-2);
  CHECK(rep.l_complete < 0.1);
  CHECK(rep.components_found == 2);
}

TEST_CASE("neglect at z = 0 has a single component") {
  for (std::size_t n : {2, 3}) {
    SyntheticProducer p(make_scenario(ScenarioKind::neglect, n, 8));
    const auto rep = total_loss(p.evaluate(std::vector<double>(2 * n, 0.0)),
                                NoiseParams{std::vector<double>(2 * n, 0.0), std::vector<double>(2 * n, 1.0)},
                                LossWeights{});
    CHECK(rep.components_found == 1);
    CHECK(rep.l_complete == 1.0);
  }
}

TEST_CASE("evaluate is deterministic") {
  SyntheticProducer p(make_scenario(ScenarioKind::interference, 2, 8));
  const std::vector<double> z{0.1, -0.7, 1.3, 0.2};
  const auto a = p.evaluate(z), b = p.evaluate(z);
  CHECK(a.cross.maps == b.cross.maps);
  CHECK(a.self.values == b.self.values);
}

TEST_CASE("vjp of zero cotangent is zero") {
  SyntheticProducer p(make_scenario(ScenarioKind::neglect, 2, 8));
  const std::vector<double> z{0.1, -0.7, 1.3, 0.2};
  const auto g = p.vjp(z, BundleCotangent::zeros_like(p.evaluate(z)));
  for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("vjp matches central differences of the outputs") {
  std::mt19937_64 rng(59);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto k : {ScenarioKind::neglect, ScenarioKind::interference, ScenarioKind::aligned})
    for (std::size_t extra : {0, 3}) {
      SyntheticProducer p(make_scenario(k, 2, 8, 4 + extra));
      std::vector<double> z(p.dimension()), v(p.dimension());
      for (double& x : z) x = normal(rng);
      for (double& x : v) x = normal(rng);
      const auto b = p.evaluate(z);
      BundleCotangent ct = BundleCotangent::zeros_like(b);
      for (auto& g : ct.cross)
        for (double& x : g.v) x = normal(rng);
      for (double& x : ct.self) x = normal(rng);
      const auto grad = p.vjp(z, ct);
      double analytic = 0.0;
      for (std::size_t d = 0; d < z.size(); ++d) analytic += grad[d] * v[d];
      auto contract = [&](double h) {
        std::vector<double> zz = z;
        for (std::size_t d = 0; d < z.size(); ++d) zz[d] += h * v[d];
        const auto bb = p.evaluate(zz);
        double s = 0.0;
        for (std::size_t j = 0; j < bb.cross.n(); ++j)
          for (std::size_t c = 0; c < 64; ++c) s += ct.cross[j][c] * bb.cross.maps[j][c];
        for (std::size_t i = 0; i < ct.self.size(); ++i) s += ct.self[i] * bb.self.values[i];
        return s;
      };
      const double h = 1e-5;
      const double numeric = (contract(h) - contract(-h)) / (2 * h);
      CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
      for (std::size_t d = 4; d < z.size(); ++d) CHECK(grad[d] == 0.0);
    }
}

TEST_CASE("latent displacement is bounded by reach") {
  SyntheticProducer p(make_scenario(ScenarioKind::aligned, 1, 16));
  const auto far = p.evaluate(std::vector<double>{1e6, 1e6});
  const auto base = p.evaluate(std::vector<double>{0.0, 0.0});
  CHECK_NOTHROW(far.validate());
  CHECK(far.cross.maps[0] != base.cross.maps[0]);
}

TEST_CASE("producer rejects wrong latent sizes and invalid specs") {
  SyntheticProducer p(make_scenario(ScenarioKind::aligned, 2, 8));
  CHECK_THROWS_AS_CODE(p.evaluate(std::vector<double>(3, 0.0)), ErrorCode::shape_mismatch);
  CHECK_THROWS_AS_CODE(make_scenario(ScenarioKind::aligned, 0, 8), ErrorCode::invalid_argument);
  CHECK_THROWS_AS_CODE(make_scenario(ScenarioKind::aligned, 2, 8, 3), ErrorCode::invalid_argument);
}

}  // TEST_SUITE
