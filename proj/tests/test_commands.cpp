#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "coconolab/commands.hpp"
#include "coconolab/render.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace coconolab;

namespace {

std::filesystem::path tmp(const std::string& name) {
  std::filesystem::path p = COCONOLAB_TEST_TMP;
  std::filesystem::create_directories(p);
  return p / name;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExportRequest export_req(ScenarioKind kind, const std::string& file, std::size_t n = 2) {
  ExportRequest req;
  req.scenario = make_scenario(kind, n, 8);
  req.out = tmp(file);
  return req;
}

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("export is deterministic and has one cross slice per subject") {
  auto req = export_req(ScenarioKind::interference, "export_a.atnz", 3);
  req.sample = true;
  req.seed = 5;
  run_export(req);
  const auto first = slurp(req.out);
  req.out = tmp("export_b.atnz");
  run_export(req);
  CHECK(slurp(req.out) == first);
  const auto recs = read_atnz(req.out);
  CHECK(find_record(recs, "cross")->dims[2] == 3);
}

TEST_CASE("evaluating an exported file equals the in-memory quantized path") {
  const auto req = export_req(ScenarioKind::aligned, "aligned.atnz");
  run_export(req);
  const Json from_file = run_evaluate(EvaluateRequest{req.out, 2, LossWeights{}, LossConfig{}});
  SyntheticProducer p(req.scenario);
  AttentionBundle b = quantize_to_float32(p.evaluate(std::vector<double>(4, 0.0)));
  const Json in_memory = evaluate_bundle(b, std::nullopt, LossWeights{}, LossConfig{});
  CHECK(from_file["report"] == in_memory["report"]);
  CHECK(from_file["report"]["total"].get<double>() == in_memory["report"]["total"].get<double>());
  CHECK(from_file["report"]["l_contrast"].get<double>() < 1e-2);
}

TEST_CASE("evaluate rejects a subject count that disagrees with the file") {
  const auto req = export_req(ScenarioKind::aligned, "aligned_n.atnz");
  run_export(req);
  CHECK_THROWS_AS_CODE(run_evaluate(EvaluateRequest{req.out, 3, LossWeights{}, LossConfig{}}),
                       ErrorCode::shape_mismatch);
}

TEST_CASE("exported masks reach the evaluation") {
  auto req = export_req(ScenarioKind::aligned, "aligned_masks.atnz");
  req.with_masks = true;
  run_export(req);
  const Json j = run_evaluate(EvaluateRequest{req.out, 2, LossWeights{}, LossConfig{}});
  REQUIRE(j.contains("file_masks"));
  CHECK(j["file_masks"]["count"] == 2);
  CHECK(j["file_masks"]["distinct_segments"] == 2);
}

TEST_CASE("render of the neglect scenario shows one bright component") {
  const auto req = export_req(ScenarioKind::neglect, "neglect.atnz");
  run_export(req);
  const auto dir = tmp("render_neglect");
  std::filesystem::remove_all(dir);
  const Json out = run_render(RenderRequest{req.out, dir, 1, LossConfig{}});
  CHECK(out["components_found"] == 1);
  for (const auto& f : out["files"]) CHECK(std::filesystem::exists(dir / f.get<std::string>()));
  const auto img = decode_pgm(slurp(dir / "softened.pgm"));
  Grid g(img.width);
  for (std::size_t c = 0; c < g.cells(); ++c) g[c] = img.pixels[c] / 255.0;
  CHECK(oracle::components(g, oracle::otsu(g)).size() == 1);
  const auto soft = decode_pgm(slurp(dir / "principal.pgm"));
  CHECK(*std::max_element(soft.pixels.begin(), soft.pixels.end()) == 255);
}

TEST_CASE("render reports an unusable output directory") {
  const auto req = export_req(ScenarioKind::aligned, "aligned_r.atnz");
  run_export(req);
  const auto blocker = tmp("render_blocker");
  std::ofstream(blocker) << "x";
  CHECK_THROWS_AS_CODE(run_render(RenderRequest{req.out, blocker / "sub", 1, LossConfig{}}), ErrorCode::io_error);
}

TEST_CASE("gradcheck passes on the aligned scenario") {
  GradcheckRequest req;
  req.scenario = make_scenario(ScenarioKind::aligned, 2, 8);
  SyntheticProducer p(req.scenario);
  const auto out = run_gradcheck(p, req);
  CHECK(out.pass);
  CHECK(out.notices.empty());
  CHECK(gradcheck_to_json(req, out)["pass"] == true);
}

TEST_CASE("gradcheck h sweep shrinks then plateaus") {
  GradcheckRequest req;
  req.scenario = make_scenario(ScenarioKind::aligned, 2, 8);
  req.steps = {1e-4, 1e-5, 1e-6};
  SyntheticProducer p(req.scenario);
  const auto out = run_gradcheck(p, req);
  REQUIRE(out.rows.size() == 3);
  const double e4 = out.rows[0].error, e5 = out.rows[1].error, e6 = out.rows[2].error;
  MESSAGE("errors " << e4 << " " << e5 << " " << e6);
  CHECK(e5 < e4);
  CHECK(e6 > 0.01 * e5);  // no longer shrinking like h²
  CHECK(e6 < 1e-4);
}

TEST_CASE("gradcheck skips sigma entries at the floor") {
  GradcheckRequest req;
  req.scenario = make_scenario(ScenarioKind::aligned, 2, 8);
  req.sigma = 1e-4;
  SyntheticProducer p(req.scenario);
  const auto out = run_gradcheck(p, req);
  CHECK(out.rows[0].sigma_skipped == 4);
  CHECK(out.notices.size() == 4);
  CHECK(out.rows[0].mu_error < 1e-4);
}

TEST_CASE("gradcheck points are reproducible") {
  const auto a = gradcheck_point(6, 11, std::nullopt), b = gradcheck_point(6, 11, std::nullopt);
  CHECK(a.params.mu == b.params.mu);
  CHECK(a.base_noise == b.base_noise);
  CHECK(gradcheck_point(6, 11, 0.5).params.sigma == std::vector<double>(6, 0.5));
  CHECK(relative_error({1, 0}, {1, 0}) == 0.0);
  CHECK(relative_error({0, 0}, {0, 0}) == 0.0);
}

TEST_CASE("optimize dump holds the best latent and maps") {
  RunConfig cfg;
  cfg.scenario = make_scenario(ScenarioKind::aligned, 2, 8);
  auto prod = producer_for(cfg);
  const auto out = run_optimize(*prod, cfg);
  CHECK(out.result.converged);
  const auto recs = optimize_dump_records(out);
  for (const char* name : {"cross", "self", "masks", "token_labels", "latent_z", "latent_mu", "latent_sigma",
                           "latent_eps", "principal", "principal_inverted", "softened"})
    CHECK_MESSAGE(find_record(recs, name) != nullptr, name);
  const auto path = tmp("dump.atnz");
  write_atnz(recs, path);
  const auto file = records_to_bundle(read_atnz(path));
  CHECK(file.bundle.cross.token_labels == std::vector<std::string>{"subject0", "subject1"});
}

TEST_CASE("optimize on a bundle file is a single evaluation") {
  const auto req = export_req(ScenarioKind::neglect, "neglect_opt.atnz");
  run_export(req);
  RunConfig cfg;
  cfg.bundle_file = req.out;
  auto prod = producer_for(cfg);
  CHECK_FALSE(prod->differentiable());
  CHECK(prod->dimension() == 4);
  const auto out = run_optimize(*prod, cfg);
  CHECK(out.result.trace.size() == 1);
  CHECK(out.report["config"]["scenario"].is_null());
}

TEST_CASE("seed sweep matches individual runs in seed order") {
  RunConfig cfg;
  cfg.scenario = make_scenario(ScenarioKind::interference, 2, 8);
  cfg.optimizer.max_rounds = 1;
  cfg.optimizer.max_steps_per_round = 10;
  cfg.optimizer.rng_seed = 4;
  const auto sweep = run_seed_sweep(cfg, 3, 3);
  REQUIRE(sweep.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    RunConfig one = cfg;
    one.optimizer.rng_seed = 4 + k;
    auto prod = producer_for(one);
    CHECK(sweep[k] == run_optimize(*prod, one).report);
  }
}

}  // TEST_SUITE
