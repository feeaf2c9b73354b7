#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "coconolab/coconolab.h"

extern "C" int capi_c_smoke(void);

namespace {

using nlohmann::json;

std::string tmp(const std::string& name) {
  std::filesystem::path p = COCONOLAB_TEST_TMP;
  std::filesystem::create_directories(p);
  return (p / name).string();
}

json take_json(char* s) {
  REQUIRE(s != nullptr);
  json j = json::parse(s);
  coconolab_string_free(s);
  return j;
}

// Serves a fixed bundle; differentiable with zero gradient when `grad` is set.
struct FixedData {
  std::vector<double> cross, self;
  size_t dim = 4;
};

int fixed_eval(void* user, const double*, double* cross, double* self) {
  auto* d = static_cast<FixedData*>(user);
  std::memcpy(cross, d->cross.data(), d->cross.size() * sizeof(double));
  std::memcpy(self, d->self.data(), d->self.size() * sizeof(double));
  return 0;
}

int zero_vjp(void* user, const double*, const double*, const double*, double* grad) {
  auto* d = static_cast<FixedData*>(user);
  for (size_t i = 0; i < d->dim; ++i) grad[i] = 0.0;
  return 0;
}

int failing_eval(void*, const double*, double*, double*) { return 7; }

FixedData scenario_data(const char* kind) {
  coconolab_scenario* sc = nullptr;
  coconolab_producer* pr = nullptr;
  REQUIRE(coconolab_scenario_create(kind, 2, 8, 0, &sc) == COCONOLAB_OK);
  REQUIRE(coconolab_producer_from_scenario(sc, &pr) == COCONOLAB_OK);
  FixedData d;
  d.cross.resize(128);
  d.self.resize(4096);
  const double z[4] = {0, 0, 0, 0};
  REQUIRE(coconolab_producer_evaluate(pr, z, 4, d.cross.data(), 128, d.self.data(), 4096) == COCONOLAB_OK);
  coconolab_producer_destroy(pr);
  coconolab_scenario_destroy(sc);
  return d;
}

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("the header works from C") { CHECK(capi_c_smoke() == 1); }

TEST_CASE("status names and version") {
  CHECK(std::string(coconolab_status_name(COCONOLAB_OK)) == "ok");
  CHECK(std::string(coconolab_status_name(COCONOLAB_BAD_MAGIC)) == "bad_magic");
  CHECK(std::strlen(coconolab_version()) > 0);
}

TEST_CASE("scenario JSON round trip") {
  coconolab_scenario* sc = nullptr;
  REQUIRE(coconolab_scenario_from_json(R"({"kind":"neglect","n_subjects":2,"r":8})", &sc) == COCONOLAB_OK);
  char* out = nullptr;
  REQUIRE(coconolab_scenario_to_json(sc, &out) == COCONOLAB_OK);
  const json j = take_json(out);
  CHECK(j["kind"] == "neglect");
  coconolab_scenario_destroy(sc);
  CHECK(coconolab_scenario_from_json("{", &sc) == COCONOLAB_MALFORMED);
}

TEST_CASE("null arguments are invalid") {
  CHECK(coconolab_scenario_create(nullptr, 2, 8, 0, nullptr) == COCONOLAB_INVALID_ARGUMENT);
  CHECK(coconolab_producer_shape(nullptr, nullptr, nullptr, nullptr) == COCONOLAB_INVALID_ARGUMENT);
  CHECK(std::strlen(coconolab_last_error()) > 0);
  coconolab_producer_destroy(nullptr);
  coconolab_result_destroy(nullptr);
}

TEST_CASE("buffer sizes are checked") {
  coconolab_scenario* sc = nullptr;
  coconolab_producer* pr = nullptr;
  REQUIRE(coconolab_scenario_create("aligned", 2, 8, 0, &sc) == COCONOLAB_OK);
  REQUIRE(coconolab_producer_from_scenario(sc, &pr) == COCONOLAB_OK);
  std::vector<double> z(4, 0.0), cross(127), self(4096);
  CHECK(coconolab_producer_evaluate(pr, z.data(), 4, cross.data(), 127, self.data(), 4096) ==
        COCONOLAB_SHAPE_MISMATCH);
  CHECK(coconolab_producer_evaluate(pr, z.data(), 3, cross.data(), 127, self.data(), 4096) ==
        COCONOLAB_SHAPE_MISMATCH);
  coconolab_producer_destroy(pr);
  coconolab_scenario_destroy(sc);
}

TEST_CASE("evaluate bundle reports the losses") {
  auto d = scenario_data("neglect");
  char* out = nullptr;
  REQUIRE(coconolab_evaluate_bundle(8, 2, d.cross.data(), d.self.data(), nullptr, nullptr, &out) == COCONOLAB_OK);
  const json j = take_json(out);
  CHECK(j["report"]["l_complete"] == 1.0);
  d.cross[0] = 2.0;
  CHECK(coconolab_evaluate_bundle(8, 2, d.cross.data(), d.self.data(), nullptr, nullptr, &out) ==
        COCONOLAB_INVALID_ARGUMENT);
}

TEST_CASE("optimize a scenario producer and read the result") {
  coconolab_scenario* sc = nullptr;
  coconolab_producer* pr = nullptr;
  REQUIRE(coconolab_scenario_create("neglect", 2, 8, 0, &sc) == COCONOLAB_OK);
  REQUIRE(coconolab_producer_from_scenario(sc, &pr) == COCONOLAB_OK);
  coconolab_result* res = nullptr;
  REQUIRE(coconolab_optimize(pr, R"({"seed": 0})", &res) == COCONOLAB_OK);
  CHECK(coconolab_result_converged(res) == 1);
  char* rep = nullptr;
  REQUIRE(coconolab_result_report(res, &rep) == COCONOLAB_OK);
  const json j = take_json(rep);
  CHECK(j["converged"] == true);
  std::vector<double> z(4);
  REQUIRE(coconolab_result_best_latent(res, z.data(), 4) == COCONOLAB_OK);
  const auto best = j["best_latent"].get<std::vector<double>>();
  CHECK(best == z);
  CHECK(coconolab_result_best_latent(res, z.data(), 3) == COCONOLAB_SHAPE_MISMATCH);
  const std::string path = tmp("capi_dump.atnz");
  CHECK(coconolab_result_write_atnz(res, path.c_str()) == COCONOLAB_OK);
  coconolab_producer* from_file = nullptr;
  REQUIRE(coconolab_producer_from_atnz(path.c_str(), 0, &from_file) == COCONOLAB_OK);
  size_t dim = 0, r = 0, n = 0;
  coconolab_producer_shape(from_file, &dim, &r, &n);
  CHECK(dim == 4);
  CHECK(n == 2);
  CHECK(coconolab_optimize(pr, R"({"bogus": 1})", &res) == COCONOLAB_INVALID_ARGUMENT);
  coconolab_producer_destroy(from_file);
  coconolab_result_destroy(res);
  coconolab_producer_destroy(pr);
  coconolab_scenario_destroy(sc);
}

TEST_CASE("callback producers") {
  FixedData d = scenario_data("aligned");
  coconolab_producer_callbacks cb{&d, 4, 8, 2, fixed_eval, zero_vjp};
  coconolab_producer* pr = nullptr;
  REQUIRE(coconolab_producer_from_callbacks(&cb, &pr) == COCONOLAB_OK);
  coconolab_result* res = nullptr;
  REQUIRE(coconolab_optimize(pr, nullptr, &res) == COCONOLAB_OK);
  CHECK(coconolab_result_converged(res) == 1);
  coconolab_result_destroy(res);
  coconolab_producer_destroy(pr);

  coconolab_producer_callbacks bad{&d, 4, 8, 2, failing_eval, nullptr};
  REQUIRE(coconolab_producer_from_callbacks(&bad, &pr) == COCONOLAB_OK);
  CHECK(coconolab_optimize(pr, nullptr, &res) == COCONOLAB_PRODUCER_FAILURE);
  coconolab_producer_destroy(pr);
}

TEST_CASE("JSON commands") {
  const std::string atnz = tmp("capi_export.atnz");
  char* out = nullptr;
  const json exp_req{{"scenario", {{"kind", "aligned"}, {"n_subjects", 2}, {"r", 8}}}, {"out", atnz}};
  REQUIRE(coconolab_run_export(exp_req.dump().c_str(), &out) == COCONOLAB_OK);
  coconolab_string_free(out);

  const json ev_req{{"atnz", atnz}, {"n_subjects", 2}};
  REQUIRE(coconolab_run_evaluate(ev_req.dump().c_str(), &out) == COCONOLAB_OK);
  CHECK(take_json(out)["report"]["l_contrast"].get<double>() < 1e-2);
  const json bad_n{{"atnz", atnz}, {"n_subjects", 3}};
  CHECK(coconolab_run_evaluate(bad_n.dump().c_str(), &out) == COCONOLAB_SHAPE_MISMATCH);

  const json rd_req{{"atnz", atnz}, {"out_dir", tmp("capi_render")}};
  REQUIRE(coconolab_run_render(rd_req.dump().c_str(), &out) == COCONOLAB_OK);
  CHECK(take_json(out)["files"].size() == 7);

  int passed = 0;
  const json gc_req{{"scenario", {{"kind", "aligned"}, {"n_subjects", 2}, {"r", 8}}}, {"seed", 0}};
  REQUIRE(coconolab_run_gradcheck(gc_req.dump().c_str(), &out, &passed) == COCONOLAB_OK);
  coconolab_string_free(out);
  CHECK(passed == 1);

  int converged = 0;
  const json opt_req{{"config", {{"scenario", {{"kind", "aligned"}, {"n_subjects", 2}, {"r", 8}}}}}};
  REQUIRE(coconolab_run_optimize(opt_req.dump().c_str(), &out, &converged) == COCONOLAB_OK);
  coconolab_string_free(out);
  CHECK(converged == 1);

  const json missing{{"atnz", tmp("nope.atnz")}, {"n_subjects", 2}};
  CHECK(coconolab_run_evaluate(missing.dump().c_str(), &out) == COCONOLAB_IO_ERROR);
  CHECK(coconolab_run_evaluate("[]", &out) == COCONOLAB_INVALID_ARGUMENT);
}

}  // TEST_SUITE
