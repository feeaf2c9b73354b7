#include <doctest.h>

#include <random>

#include "coconolab/evaluation.hpp"
#include "coconolab/optimizer.hpp"
#include "coconolab/synthetic.hpp"
#include "test_util.hpp"

using namespace coconolab;

namespace {

Mask rect(std::size_t r, std::size_t k0, std::size_t k1, std::size_t l0, std::size_t l1) {
  Mask m(r);
  for (std::size_t k = k0; k < k1; ++k)
    for (std::size_t l = l0; l < l1; ++l) m[k * r + l] = 1;
  return m;
}

MaskSet set_of(std::vector<Mask> masks) {
  MaskSet s;
  s.r = masks.front().r;
  s.masks = std::move(masks);
  return s;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("distinct segment examples") {
  CHECK(count_distinct_segments(set_of({rect(8, 0, 2, 0, 2), rect(8, 5, 7, 5, 7)}), 1) == 2);
  CHECK(count_distinct_segments(set_of({rect(8, 0, 2, 0, 2), rect(8, 0, 2, 0, 2)}), 1) == 1);
  // 5-cell strips sharing 3 cells: ratio 0.6
  const Mask a = rect(8, 0, 1, 0, 5), b = rect(8, 0, 1, 2, 7), c = rect(8, 6, 8, 6, 8);
  CHECK(overlap_ratio(a, b) == doctest::Approx(0.6));
  CHECK(count_distinct_segments(set_of({a, b, c}), 1) == 2);
}

TEST_CASE("min area filters small masks") {
  CHECK(count_distinct_segments(set_of({rect(8, 0, 1, 0, 1), rect(8, 5, 7, 5, 7)}), 4) == 1);
  CHECK(default_min_area(16) == 4);
  CHECK(default_min_area(8) == 1);
  CHECK(default_min_area(32) == 16);
}

TEST_CASE("pairwise overlap examples") {
  CHECK(pairwise_overlap(set_of({rect(8, 0, 2, 0, 2), rect(8, 5, 7, 5, 7)})) == 0.0);
  CHECK(pairwise_overlap(set_of({rect(8, 0, 2, 0, 2), rect(8, 0, 2, 0, 2)})) == 1.0);
  CHECK(pairwise_overlap(set_of({rect(8, 0, 2, 0, 2), rect(8, 0, 2, 1, 3)})) == 0.5);
  CHECK(overlap_ratio(rect(8, 0, 2, 0, 2), Mask(8)) == 0.0);
}

TEST_CASE("pairwise overlap needs two masks and consistent shapes") {
  CHECK_THROWS_AS_CODE(pairwise_overlap(set_of({rect(8, 0, 2, 0, 2)})), ErrorCode::invalid_argument);
  CHECK_THROWS_AS_CODE(pairwise_overlap(set_of({rect(8, 0, 2, 0, 2), Mask(4)})), ErrorCode::shape_mismatch);
}

TEST_CASE("overlap and distinct-count properties on random masks") {
  std::mt19937_64 rng(67);
  std::bernoulli_distribution bit(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Mask> ms;
    const std::size_t m = 2 + static_cast<std::size_t>(trial % 4);
    for (std::size_t i = 0; i < m; ++i) {
      Mask x(6);
      for (auto& c : x.v) c = bit(rng);
      ms.push_back(x);
    }
    const auto s = set_of(ms);
    const double o = pairwise_overlap(s);
    CHECK(o >= 0.0);
    CHECK(o <= 1.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) CHECK(overlap_ratio(ms[i], ms[j]) == overlap_ratio(ms[j], ms[i]));
    CHECK(count_distinct_segments(s, 1) <= m);
  }
}

TEST_CASE("distinct count equals m for disjoint masks above min area") {
  std::vector<Mask> ms;
  for (std::size_t i = 0; i < 4; ++i) ms.push_back(rect(16, 4 * i, 4 * i + 2, 0, 3));
  CHECK(count_distinct_segments(set_of(ms), default_min_area(16)) == 4);
}

TEST_CASE("segment masks are labelled by assigned subject") {
  SyntheticProducer p(make_scenario(ScenarioKind::aligned, 2, 8));
  const auto ev = evaluate_losses(p.evaluate(std::vector<double>(4, 0.0)), init_params(4), LossWeights{});
  const auto ms = masks_from_segments(ev.chosen.segments, ev.chosen.assignment);
  REQUIRE(ms.size() == 2);
  CHECK(ms.labels[0] == "subject0");
  const auto inv = ev.chosen.assignment.inverse();
  CHECK(ms.masks[1] == ev.chosen.segments.masks[inv[1]]);
  CHECK(count_distinct_segments(ms, 1) == 2);
  const auto subj = subject_masks(ev);
  CHECK(subj.size() == 2);
  CHECK(pairwise_overlap(subj) < 0.5);
}

}  // TEST_SUITE
