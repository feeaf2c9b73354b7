#include "coconolab/report.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  require(j.is_object(), ErrorCode::invalid_argument, what + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    require(known, ErrorCode::invalid_argument, "unknown key '" + key + "' in " + what);
  }
}

template <class T>
void read_field(const Json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::invalid_argument, std::string("bad value for '") + key + "' in " + what);
  }
}

Json blob_to_json(const BlobSpec& b) {
  return Json{{"self_x", b.self_x},       {"self_y", b.self_y},         {"cross_x", b.cross_x},
              {"cross_y", b.cross_y},     {"self_gain", b.self_gain},   {"cross_gain", b.cross_gain},
              {"amplitude", b.amplitude}};
}

BlobSpec blob_from_json(const Json& j) {
  const std::string what = "blob";
  check_keys(j, {"self_x", "self_y", "cross_x", "cross_y", "self_gain", "cross_gain", "amplitude"}, what);
  BlobSpec b;
  read_field(j, "self_x", b.self_x, what);
  read_field(j, "self_y", b.self_y, what);
  b.cross_x = b.self_x;
  b.cross_y = b.self_y;
  read_field(j, "cross_x", b.cross_x, what);
  read_field(j, "cross_y", b.cross_y, what);
  read_field(j, "self_gain", b.self_gain, what);
  read_field(j, "cross_gain", b.cross_gain, what);
  read_field(j, "amplitude", b.amplitude, what);
  return b;
}

Json trace_to_json(const std::vector<TraceEntry>& trace) {
  Json out = Json::array();
  for (const auto& t : trace)
    out.push_back(Json{{"round", t.round},
                       {"step", t.step},
                       {"l_contrast", t.l_contrast},
                       {"l_complete", t.l_complete},
                       {"l_kl", t.l_kl},
                       {"total", t.total}});
  return out;
}

}  // namespace

Json scenario_to_json(const ScenarioSpec& spec) {
  Json blobs = Json::array();
  for (const auto& b : spec.blobs) blobs.push_back(blob_to_json(b));
  return Json{{"kind", scenario_kind_name(spec.kind)},
              {"n_subjects", spec.n_subjects},
              {"r", spec.r},
              {"latent_dim", spec.latent_dim},
              {"self_width", spec.self_width},
              {"cross_width", spec.cross_width},
              {"cross_order", spec.cross_order},
              {"background", spec.background},
              {"foreground_coupling", spec.foreground_coupling},
              {"reach", spec.reach},
              {"blobs", blobs}};
}

ScenarioSpec scenario_from_json(const Json& j) {
  const std::string what = "scenario";
  check_keys(j, {"kind", "n_subjects", "r", "latent_dim", "self_width", "cross_width", "cross_order", "background",
                 "foreground_coupling", "reach", "blobs"},
             what);
  std::string kind_name = "custom";
  read_field(j, "kind", kind_name, what);
  const ScenarioKind kind = parse_scenario_kind(kind_name);

  ScenarioSpec spec;
  if (kind != ScenarioKind::custom) {
    std::size_t n = 0, r = 8, dim = 0;
    read_field(j, "n_subjects", n, what);
    read_field(j, "r", r, what);
    read_field(j, "latent_dim", dim, what);
    spec = make_scenario(kind, n, r, dim);
  } else {
    require(j.contains("blobs"), ErrorCode::invalid_argument, "a custom scenario needs 'blobs'");
    read_field(j, "n_subjects", spec.n_subjects, what);
    read_field(j, "r", spec.r, what);
    read_field(j, "latent_dim", spec.latent_dim, what);
  }
  read_field(j, "self_width", spec.self_width, what);
  read_field(j, "cross_width", spec.cross_width, what);
  read_field(j, "cross_order", spec.cross_order, what);
  read_field(j, "background", spec.background, what);
  read_field(j, "foreground_coupling", spec.foreground_coupling, what);
  read_field(j, "reach", spec.reach, what);
  if (j.contains("blobs")) {
    require(j.at("blobs").is_array(), ErrorCode::invalid_argument, "'blobs' must be an array");
    spec.blobs.clear();
    for (const auto& b : j.at("blobs")) spec.blobs.push_back(blob_from_json(b));
  }
  if (kind == ScenarioKind::custom) {
    if (!j.contains("n_subjects")) spec.n_subjects = spec.blobs.size();
    if (!j.contains("latent_dim")) spec.latent_dim = 2 * spec.n_subjects;
  }
  spec.validate();
  return spec;
}

Json optimizer_to_json(const OptimizerConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"max_steps_per_round", c.max_steps_per_round},
              {"max_rounds", c.max_rounds},
              {"stall_window", c.stall_window},
              {"stall_min_decrease", c.stall_min_decrease},
              {"success_complete", c.success_complete},
              {"success_contrast", c.success_contrast},
              {"sigma_floor", c.sigma_floor},
              {"rng_seed", c.rng_seed}};
}

OptimizerConfig optimizer_from_json(const Json& j, OptimizerConfig c) {
  const std::string what = "optimizer config";
  check_keys(j, {"learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "max_steps_per_round", "max_rounds",
                 "stall_window", "stall_min_decrease", "success_complete", "success_contrast", "sigma_floor",
                 "rng_seed"},
             what);
  read_field(j, "learning_rate", c.learning_rate, what);
  read_field(j, "adam_beta1", c.adam_beta1, what);
  read_field(j, "adam_beta2", c.adam_beta2, what);
  read_field(j, "adam_eps", c.adam_eps, what);
  read_field(j, "max_steps_per_round", c.max_steps_per_round, what);
  read_field(j, "max_rounds", c.max_rounds, what);
  read_field(j, "stall_window", c.stall_window, what);
  read_field(j, "stall_min_decrease", c.stall_min_decrease, what);
  read_field(j, "success_complete", c.success_complete, what);
  read_field(j, "success_contrast", c.success_contrast, what);
  read_field(j, "sigma_floor", c.sigma_floor, what);
  read_field(j, "rng_seed", c.rng_seed, what);
  c.validate();
  return c;
}

Json weights_to_json(const LossWeights& w) {
  return Json{{"contrast", w.contrast}, {"complete", w.complete}, {"kl", w.kl}};
}

LossWeights weights_from_json(const Json& j) {
  const std::string what = "weights";
  check_keys(j, {"contrast", "complete", "kl"}, what);
  LossWeights w;
  read_field(j, "contrast", w.contrast, what);
  read_field(j, "complete", w.complete, what);
  read_field(j, "kl", w.kl, what);
  w.validate();
  return w;
}

Json loss_config_to_json(const LossConfig& cfg) {
  Json smoothing = nullptr;
  if (cfg.smoothing) smoothing = Json{{"kernel_size", cfg.smoothing->kernel_size}, {"sigma", cfg.smoothing->sigma}};
  return Json{{"alpha", cfg.alpha},
              {"beta", cfg.beta},
              {"smoothing", smoothing},
              {"pca_tolerance", cfg.pca.tolerance},
              {"pca_max_iterations", cfg.pca.max_iterations}};
}

LossConfig loss_config_from_json(const Json& j) {
  const std::string what = "loss config";
  check_keys(j, {"alpha", "beta", "smoothing", "pca_tolerance", "pca_max_iterations"}, what);
  LossConfig cfg;
  read_field(j, "alpha", cfg.alpha, what);
  read_field(j, "beta", cfg.beta, what);
  if (j.contains("smoothing")) {
    const Json& s = j.at("smoothing");
    if (s.is_null()) {
      cfg.smoothing.reset();
    } else {
      check_keys(s, {"kernel_size", "sigma"}, "smoothing config");
      SmoothingConfig sc;
      read_field(s, "kernel_size", sc.kernel_size, "smoothing config");
      read_field(s, "sigma", sc.sigma, "smoothing config");
      sc.validate();
      cfg.smoothing = sc;
    }
  }
  read_field(j, "pca_tolerance", cfg.pca.tolerance, what);
  read_field(j, "pca_max_iterations", cfg.pca.max_iterations, what);
  require(cfg.alpha > 0.0 && std::isfinite(cfg.alpha), ErrorCode::invalid_argument, "alpha must be positive");
  require(std::isfinite(cfg.beta), ErrorCode::invalid_argument, "beta must be finite");
  require(cfg.pca.tolerance > 0.0 && cfg.pca.max_iterations > 0, ErrorCode::invalid_argument,
          "PCA tolerance and iteration cap must be positive");
  return cfg;
}

Json run_config_to_json(const RunConfig& cfg) {
  Json bundle = nullptr;
  if (cfg.bundle_file) bundle = Json{{"file", cfg.bundle_file->string()}, {"latent_dim", cfg.bundle_latent_dim}};
  const bool has_scenario = !cfg.bundle_file && !cfg.scenario.blobs.empty();
  return Json{{"scenario", has_scenario ? scenario_to_json(cfg.scenario) : Json(nullptr)},
              {"bundle", bundle},
              {"optimizer", optimizer_to_json(cfg.optimizer)},
              {"weights", weights_to_json(cfg.weights)},
              {"loss", loss_config_to_json(cfg.loss)},
              {"seed", cfg.optimizer.rng_seed}};
}

RunConfig run_config_from_json(const Json& in) {
  const Json& j = in.is_object() && in.contains("schema") && in.contains("config") ? in.at("config") : in;
  check_keys(j, {"scenario", "bundle", "optimizer", "weights", "loss", "seed"}, "run config");
  RunConfig cfg;
  const bool has_bundle = j.contains("bundle") && !j.at("bundle").is_null();
  const bool has_scenario = j.contains("scenario") && !j.at("scenario").is_null();
  require(has_bundle != has_scenario, ErrorCode::invalid_argument,
          "run config needs exactly one of 'scenario' and 'bundle'");
  if (has_scenario) cfg.scenario = scenario_from_json(j.at("scenario"));
  if (has_bundle) {
    const Json& b = j.at("bundle");
    check_keys(b, {"file", "latent_dim"}, "bundle");
    std::string file;
    read_field(b, "file", file, "bundle");
    require(!file.empty(), ErrorCode::invalid_argument, "bundle needs a 'file'");
    cfg.bundle_file = file;
    read_field(b, "latent_dim", cfg.bundle_latent_dim, "bundle");
  }
  if (j.contains("optimizer")) cfg.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("seed")) {
    std::uint64_t seed = 0;
    read_field(j, "seed", seed, "run config");
    require(!j.contains("optimizer") || !j.at("optimizer").contains("rng_seed") || seed == cfg.optimizer.rng_seed,
            ErrorCode::invalid_argument, "'seed' disagrees with optimizer.rng_seed");
    cfg.optimizer.rng_seed = seed;
  }
  if (j.contains("weights")) cfg.weights = weights_from_json(j.at("weights"));
  if (j.contains("loss")) cfg.loss = loss_config_from_json(j.at("loss"));
  return cfg;
}

Json loss_report_to_json(const LossReport& r) {
  Json table = Json::array();
  for (std::size_t i = 0; i < r.n; ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < r.n; ++k) row.push_back(r.interference_table[i * r.n + k]);
    table.push_back(row);
  }
  return Json{{"l_contrast", r.l_contrast},
              {"l_complete", r.l_complete},
              {"l_kl", r.l_kl},
              {"total", r.total},
              {"pca_sign", pca_sign_name(r.pca_sign_chosen)},
              {"n", r.n},
              {"threshold", r.threshold},
              {"components_found", r.components_found},
              {"assignment", r.assignment},
              {"segment_masses", r.segment_masses},
              {"coverage", r.coverage},
              {"interference_table", table}};
}

RunMetrics compute_metrics(const LossEvaluation& eval) {
  RunMetrics m;
  const std::size_t r = eval.smoothed_cross.r;
  m.min_area = default_min_area(r);
  m.distinct_segments =
      count_distinct_segments(masks_from_segments(eval.chosen.segments, eval.chosen.assignment), m.min_area);
  const MaskSet subjects = subject_masks(eval);
  if (subjects.size() >= 2) m.pairwise_overlap = pairwise_overlap(subjects);
  return m;
}

Json metrics_to_json(const RunMetrics& m) {
  return Json{{"min_area", m.min_area},
              {"distinct_segments", m.distinct_segments},
              {"pairwise_overlap", m.pairwise_overlap ? Json(*m.pairwise_overlap) : Json(nullptr)}};
}

Json run_report_to_json(const RunConfig& cfg, const OptimizationResult& res, const RunMetrics& initial,
                        const RunMetrics& final) {
  return Json{{"schema", kRunReportSchema},
              {"schema_version", kRunReportVersion},
              {"config", run_config_to_json(cfg)},
              {"seed", cfg.optimizer.rng_seed},
              {"initial", loss_report_to_json(res.initial_report)},
              {"trace", trace_to_json(res.trace)},
              {"final", loss_report_to_json(res.best_report)},
              {"assignment", res.best_report.assignment},
              {"segment_masses", res.best_report.segment_masses},
              {"metrics", Json{{"initial", metrics_to_json(initial)}, {"final", metrics_to_json(final)}}},
              {"converged", res.converged},
              {"rounds_used", res.rounds_used},
              {"best_round", res.best_round},
              {"best_step", res.best_step},
              {"best_latent", res.best_latent.z},
              {"notices", res.notices}};
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::malformed, what + " is not valid JSON: " + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), "'" + path.string() + "'");
}

}  // namespace coconolab
