#include "coconolab/coconolab.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "coconolab/commands.hpp"
#include "coconolab/error.hpp"

using namespace coconolab;

struct coconolab_scenario {
  ScenarioSpec spec;
};

struct coconolab_producer {
  std::unique_ptr<AttentionProducer> impl;
  std::optional<ScenarioSpec> scenario;
  std::optional<std::filesystem::path> bundle_file;
  std::size_t bundle_latent_dim = 0;
};

struct coconolab_result {
  OptimizeOutcome outcome;
};

namespace {

thread_local std::string last_error;

template <class F>
coconolab_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return COCONOLAB_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return static_cast<coconolab_status>(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return COCONOLAB_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return COCONOLAB_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return COCONOLAB_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return COCONOLAB_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::invalid_argument, std::string(what) + " must not be null");
}

Json parse_request(const char* text, const char* what) {
  need(text, what);
  const Json j = parse_json(text, what);
  require(j.is_object(), ErrorCode::invalid_argument, std::string(what) + " must be a JSON object");
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

class CallbackProducer final : public AttentionProducer {
 public:
  explicit CallbackProducer(const coconolab_producer_callbacks& cb) : cb_(cb) {
    require(cb.evaluate != nullptr, ErrorCode::invalid_argument, "evaluate callback must not be null");
    require(cb.dimension >= 1 && cb.r >= 1 && cb.n_subjects >= 1, ErrorCode::invalid_argument,
            "callback producer needs positive dimension, r and subject count");
  }

  std::size_t dimension() const override { return cb_.dimension; }
  bool differentiable() const override { return cb_.vjp != nullptr; }

  AttentionBundle evaluate(std::span<const double> z) const override {
    check(z);
    const std::size_t cells = cb_.r * cb_.r;
    std::vector<double> cross(cells * cb_.n_subjects), self(cells * cells);
    require(cb_.evaluate(cb_.user, z.data(), cross.data(), self.data()) == 0, ErrorCode::producer_failure,
            "evaluate callback reported failure");
    AttentionBundle b;
    b.cross.r = cb_.r;
    b.cross.maps.assign(cb_.n_subjects, Grid(cb_.r));
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t j = 0; j < cb_.n_subjects; ++j) b.cross.maps[j][c] = cross[c * cb_.n_subjects + j];
    b.self.r = cb_.r;
    b.self.values = std::move(self);
    b.validate();
    return b;
  }

  std::vector<double> vjp(std::span<const double> z, const BundleCotangent& cot) const override {
    check(z);
    require(cb_.vjp != nullptr, ErrorCode::producer_failure, "producer has no gradient");
    const std::size_t cells = cb_.r * cb_.r;
    std::vector<double> cross(cells * cb_.n_subjects);
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t j = 0; j < cb_.n_subjects; ++j) cross[c * cb_.n_subjects + j] = cot.cross[j][c];
    std::vector<double> grad(cb_.dimension, 0.0);
    require(cb_.vjp(cb_.user, z.data(), cross.data(), cot.self.data(), grad.data()) == 0,
            ErrorCode::producer_failure, "vjp callback reported failure");
    return grad;
  }

 private:
  void check(std::span<const double> z) const {
    require(z.size() == cb_.dimension, ErrorCode::shape_mismatch, "latent dimension mismatch");
  }

  coconolab_producer_callbacks cb_;
};

RunConfig config_for(const coconolab_producer& p, const Json& j) {
  RunConfig cfg;
  if (p.scenario) cfg.scenario = *p.scenario;
  cfg.bundle_file = p.bundle_file;
  cfg.bundle_latent_dim = p.bundle_latent_dim;
  for (const auto& [key, _] : j.items())
    require(key == "optimizer" || key == "weights" || key == "loss" || key == "seed", ErrorCode::invalid_argument,
            "unknown key '" + key + "' in optimize config");
  if (j.contains("optimizer")) cfg.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("seed")) cfg.optimizer.rng_seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("weights")) cfg.weights = weights_from_json(j.at("weights"));
  if (j.contains("loss")) cfg.loss = loss_config_from_json(j.at("loss"));
  return cfg;
}

LossWeights weights_or_default(const Json& j) {
  return j.contains("weights") ? weights_from_json(j.at("weights")) : LossWeights{};
}

LossConfig loss_or_default(const Json& j) {
  return j.contains("loss") ? loss_config_from_json(j.at("loss")) : LossConfig{};
}

}  // namespace

extern "C" {

const char* coconolab_version(void) { return "0.1.0"; }

const char* coconolab_status_name(coconolab_status status) {
  if (status == COCONOLAB_OK) return "ok";
  if (status == COCONOLAB_INTERNAL) return "internal";
  return error_code_name(static_cast<ErrorCode>(status));
}

const char* coconolab_last_error(void) { return last_error.c_str(); }

void coconolab_string_free(char* s) { delete[] s; }

coconolab_status coconolab_scenario_create(const char* kind, size_t n_subjects, size_t r, size_t latent_dim,
                                           coconolab_scenario** out) {
  return guarded([&] {
    need(kind, "kind");
    need(out, "out");
    *out = new coconolab_scenario{make_scenario(parse_scenario_kind(kind), n_subjects, r, latent_dim)};
  });
}

coconolab_status coconolab_scenario_from_json(const char* json, coconolab_scenario** out) {
  return guarded([&] {
    need(out, "out");
    *out = new coconolab_scenario{scenario_from_json(parse_request(json, "scenario"))};
  });
}

coconolab_status coconolab_scenario_to_json(const coconolab_scenario* scenario, char** out_json) {
  return guarded([&] {
    need(scenario, "scenario");
    need(out_json, "out_json");
    *out_json = dup_string(dump(scenario_to_json(scenario->spec)));
  });
}

void coconolab_scenario_destroy(coconolab_scenario* scenario) { delete scenario; }

coconolab_status coconolab_producer_from_scenario(const coconolab_scenario* scenario, coconolab_producer** out) {
  return guarded([&] {
    need(scenario, "scenario");
    need(out, "out");
    auto p = std::make_unique<coconolab_producer>();
    p->impl = make_producer(scenario->spec);
    p->scenario = scenario->spec;
    *out = p.release();
  });
}

coconolab_status coconolab_producer_from_atnz(const char* path, size_t latent_dim, coconolab_producer** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    RunConfig cfg;
    cfg.bundle_file = path;
    cfg.bundle_latent_dim = latent_dim;
    auto p = std::make_unique<coconolab_producer>();
    p->impl = producer_for(cfg);
    p->bundle_file = cfg.bundle_file;
    p->bundle_latent_dim = latent_dim;
    *out = p.release();
  });
}

coconolab_status coconolab_producer_from_callbacks(const coconolab_producer_callbacks* callbacks,
                                                   coconolab_producer** out) {
  return guarded([&] {
    need(callbacks, "callbacks");
    need(out, "out");
    auto p = std::make_unique<coconolab_producer>();
    p->impl = std::make_unique<CallbackProducer>(*callbacks);
    *out = p.release();
  });
}

coconolab_status coconolab_producer_shape(const coconolab_producer* producer, size_t* dimension, size_t* r,
                                          size_t* n_subjects) {
  return guarded([&] {
    need(producer, "producer");
    const std::size_t dim = producer->impl->dimension();
    const AttentionBundle b = producer->impl->evaluate(std::vector<double>(dim, 0.0));
    if (dimension) *dimension = dim;
    if (r) *r = b.cross.r;
    if (n_subjects) *n_subjects = b.cross.n();
  });
}

coconolab_status coconolab_producer_evaluate(const coconolab_producer* producer, const double* z, size_t dimension,
                                             double* cross, size_t cross_len, double* self, size_t self_len) {
  return guarded([&] {
    need(producer, "producer");
    need(z, "z");
    need(cross, "cross");
    need(self, "self");
    const AttentionBundle b = producer->impl->evaluate(std::span<const double>(z, dimension));
    const std::size_t n = b.cross.n();
    const std::size_t cells = b.cross.r * b.cross.r;
    require(cross_len == cells * n, ErrorCode::shape_mismatch, "cross buffer has the wrong length");
    require(self_len == b.self.values.size(), ErrorCode::shape_mismatch, "self buffer has the wrong length");
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t j = 0; j < n; ++j) cross[c * n + j] = b.cross.maps[j][c];
    std::copy(b.self.values.begin(), b.self.values.end(), self);
  });
}

void coconolab_producer_destroy(coconolab_producer* producer) { delete producer; }

coconolab_status coconolab_evaluate_bundle(size_t r, size_t n_subjects, const double* cross, const double* self,
                                           const char* weights_json, const char* loss_json, char** out_json) {
  return guarded([&] {
    need(cross, "cross");
    need(self, "self");
    need(out_json, "out_json");
    require(r >= 1 && n_subjects >= 1, ErrorCode::invalid_argument, "r and subject count must be positive");
    const std::size_t cells = r * r;
    AttentionBundle b;
    b.cross.r = r;
    b.cross.maps.assign(n_subjects, Grid(r));
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t j = 0; j < n_subjects; ++j) b.cross.maps[j][c] = cross[c * n_subjects + j];
    b.self.r = r;
    b.self.values.assign(self, self + cells * cells);
    b.validate();
    const LossWeights w = weights_json ? weights_from_json(parse_request(weights_json, "weights")) : LossWeights{};
    const LossConfig l = loss_json ? loss_config_from_json(parse_request(loss_json, "loss config")) : LossConfig{};
    *out_json = dup_string(dump(evaluate_bundle(b, std::nullopt, w, l)));
  });
}

coconolab_status coconolab_optimize(const coconolab_producer* producer, const char* config_json,
                                    coconolab_result** out) {
  return guarded([&] {
    need(producer, "producer");
    need(out, "out");
    const Json j = config_json ? parse_request(config_json, "optimize config") : Json::object();
    const RunConfig cfg = config_for(*producer, j);
    auto res = std::make_unique<coconolab_result>();
    res->outcome = run_optimize(*producer->impl, cfg);
    *out = res.release();
  });
}

int coconolab_result_converged(const coconolab_result* result) {
  return result && result->outcome.result.converged ? 1 : 0;
}

coconolab_status coconolab_result_report(const coconolab_result* result, char** out_json) {
  return guarded([&] {
    need(result, "result");
    need(out_json, "out_json");
    *out_json = dup_string(dump(result->outcome.report));
  });
}

coconolab_status coconolab_result_best_latent(const coconolab_result* result, double* z, size_t dimension) {
  return guarded([&] {
    need(result, "result");
    need(z, "z");
    const auto& best = result->outcome.result.best_latent.z;
    require(dimension == best.size(), ErrorCode::shape_mismatch, "latent buffer has the wrong length");
    std::copy(best.begin(), best.end(), z);
  });
}

coconolab_status coconolab_result_write_atnz(const coconolab_result* result, const char* path) {
  return guarded([&] {
    need(result, "result");
    need(path, "path");
    write_atnz(optimize_dump_records(result->outcome), path);
  });
}

void coconolab_result_destroy(coconolab_result* result) { delete result; }

coconolab_status coconolab_run_optimize(const char* request_json, char** out_json, int* converged) {
  return guarded([&] {
    need(out_json, "out_json");
    const Json req = parse_request(request_json, "optimize request");
    require(req.contains("config"), ErrorCode::invalid_argument, "optimize request needs a 'config'");
    const RunConfig cfg = run_config_from_json(req.at("config"));
    const std::size_t seeds = req.value("num_seeds", std::size_t{1});
    Json out;
    bool all_converged = true;
    if (seeds <= 1) {
      const auto producer = producer_for(cfg);
      const OptimizeOutcome outcome = run_optimize(*producer, cfg);
      if (req.contains("dump") && !req.at("dump").is_null())
        write_atnz(optimize_dump_records(outcome), req.at("dump").get<std::string>());
      all_converged = outcome.result.converged;
      out = outcome.report;
    } else {
      require(!req.contains("dump") || req.at("dump").is_null(), ErrorCode::invalid_argument,
              "an ATNZ dump needs a single seed");
      const std::size_t threads = req.value("threads", thread_cap_from_env());
      const std::vector<Json> runs = run_seed_sweep(cfg, seeds, threads);
      std::size_t n_converged = 0;
      for (const auto& r : runs) n_converged += r.at("converged").get<bool>() ? 1 : 0;
      all_converged = n_converged == runs.size();
      out = Json{{"schema", "coconolab.seed_sweep"},
                 {"schema_version", kRunReportVersion},
                 {"num_seeds", seeds},
                 {"converged_runs", n_converged},
                 {"runs", runs}};
    }
    if (converged) *converged = all_converged ? 1 : 0;
    *out_json = dup_string(dump(out));
  });
}

coconolab_status coconolab_run_evaluate(const char* request_json, char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    const Json req = parse_request(request_json, "evaluate request");
    EvaluateRequest r;
    r.atnz = req.at("atnz").get<std::string>();
    r.n_subjects = req.at("n_subjects").get<std::size_t>();
    r.weights = weights_or_default(req);
    r.loss = loss_or_default(req);
    *out_json = dup_string(dump(run_evaluate(r)));
  });
}

coconolab_status coconolab_run_render(const char* request_json, char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    const Json req = parse_request(request_json, "render request");
    RenderRequest r;
    r.atnz = req.at("atnz").get<std::string>();
    r.out_dir = req.at("out_dir").get<std::string>();
    r.scale = req.value("scale", std::size_t{1});
    r.loss = loss_or_default(req);
    *out_json = dup_string(dump(run_render(r)));
  });
}

coconolab_status coconolab_run_gradcheck(const char* request_json, char** out_json, int* passed) {
  return guarded([&] {
    need(out_json, "out_json");
    const Json req = parse_request(request_json, "gradcheck request");
    GradcheckRequest r;
    r.scenario = scenario_from_json(req.at("scenario"));
    r.seed = req.value("seed", std::uint64_t{0});
    if (req.contains("steps")) r.steps = req.at("steps").get<std::vector<double>>();
    if (req.contains("sigma") && !req.at("sigma").is_null()) r.sigma = req.at("sigma").get<double>();
    r.weights = weights_or_default(req);
    r.loss = loss_or_default(req);
    r.tolerance = req.value("tolerance", r.tolerance);
    for (double h : r.steps) require(h > 0.0, ErrorCode::invalid_argument, "step sizes must be positive");
    if (r.sigma) require(*r.sigma > 0.0, ErrorCode::invalid_argument, "sigma must be positive");
    const auto producer = make_producer(r.scenario);
    const GradcheckOutcome outcome = run_gradcheck(*producer, r);
    if (passed) *passed = outcome.pass ? 1 : 0;
    *out_json = dup_string(dump(gradcheck_to_json(r, outcome)));
  });
}

coconolab_status coconolab_run_export(const char* request_json, char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    const Json req = parse_request(request_json, "export request");
    ExportRequest r;
    r.scenario = scenario_from_json(req.at("scenario"));
    r.seed = req.value("seed", std::uint64_t{0});
    r.sample = req.value("sample", false);
    r.with_masks = req.value("with_masks", false);
    r.out = req.at("out").get<std::string>();
    r.loss = loss_or_default(req);
    *out_json = dup_string(dump(run_export(r)));
  });
}

}  // extern "C"
