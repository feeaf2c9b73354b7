// Command-line front end over the coconolab C interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coconolab/coconolab.h"

namespace {

using Json = nlohmann::ordered_json;

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitBestEffort = 2;

struct Failure {
  coconolab_status status;
  std::string message;
};

// Owns a string returned by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { coconolab_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void check(coconolab_status s) {
  if (s != COCONOLAB_OK) throw Failure{s, coconolab_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw Failure{COCONOLAB_INVALID_ARGUMENT, msg}; }

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Failure{COCONOLAB_IO_ERROR, "cannot open '" + tmp.string() + "' for writing"};
    out << text;
    if (!out) throw Failure{COCONOLAB_IO_ERROR, "write to '" + tmp.string() + "' failed"};
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Failure{COCONOLAB_IO_ERROR, "cannot move output into place at '" + path.string() + "'"};
  }
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{COCONOLAB_IO_ERROR, "cannot open '" + path + "'"};
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Failure{COCONOLAB_MALFORMED, "'" + path + "' is not valid JSON: " + e.what()};
  }
}

bool is_atnz_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  return in.read(magic, 4) && std::string(magic, 4) == "ATNZ";
}

bool is_builtin_kind(const std::string& s) { return s == "aligned" || s == "neglect" || s == "interference"; }

Json parse_weights(const std::string& text) {
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      w.push_back(std::stod(item, &used));
      if (used != item.size()) usage_error("bad --weights entry '" + item + "'");
    } catch (const std::logic_error&) {
      usage_error("bad --weights entry '" + item + "'");
    }
  }
  if (w.size() != 3) usage_error("--weights takes three comma-separated values l1,l2,l3");
  return Json{{"contrast", w[0]}, {"complete", w[1]}, {"kl", w[2]}};
}

struct ScenarioFlags {
  std::string scenario;
  std::optional<std::size_t> subjects;
  std::size_t resolution = 8;
  std::size_t latent_dim = 0;

  void add_to(CLI::App* cmd, bool scenario_required) {
    auto* opt = cmd->add_option("--scenario", scenario, "aligned | neglect | interference | scenario JSON | ATNZ file");
    if (scenario_required) opt->required();
    cmd->add_option("--subjects", subjects, "Number of subjects n");
    cmd->add_option("--resolution", resolution, "Attention resolution r")->check(CLI::PositiveNumber);
    cmd->add_option("--latent-dim", latent_dim, "Latent dimension D (default 2n)");
  }

  std::size_t producer_subjects(const std::string& path) const {
    coconolab_producer* p = nullptr;
    check(coconolab_producer_from_atnz(path.c_str(), 0, &p));
    std::size_t n = 0;
    const coconolab_status s = coconolab_producer_shape(p, nullptr, nullptr, &n);
    coconolab_producer_destroy(p);
    check(s);
    return n;
  }

  // {"scenario": ...} or {"bundle": ...} for a run config.
  Json resolve(bool allow_bundle) const {
    if (is_builtin_kind(scenario)) {
      if (!subjects) usage_error("--subjects is required");
      return Json{{"scenario",
                   Json{{"kind", scenario}, {"n_subjects", *subjects}, {"r", resolution}, {"latent_dim", latent_dim}}}};
    }
    if (!std::filesystem::exists(scenario))
      usage_error("--scenario '" + scenario + "' is neither a scenario kind nor a readable file");
    if (is_atnz_file(scenario)) {
      if (!allow_bundle) usage_error("an ATNZ file cannot serve as a differentiable scenario");
      const std::size_t n = producer_subjects(scenario);
      if (!subjects) usage_error("--subjects is required");
      if (*subjects != n)
        throw Failure{COCONOLAB_SHAPE_MISMATCH, "file holds " + std::to_string(n) + " cross maps but --subjects is " +
                                                    std::to_string(*subjects)};
      return Json{{"bundle", Json{{"file", scenario}, {"latent_dim", latent_dim}}}};
    }
    Json spec = read_json(scenario);
    if (spec.contains("scenario")) spec = spec.at("scenario");
    if (!subjects) usage_error("--subjects is required");
    if (spec.contains("n_subjects") && spec.at("n_subjects") != *subjects)
      throw Failure{COCONOLAB_SHAPE_MISMATCH, "scenario file describes a different subject count than --subjects"};
    return Json{{"scenario", spec}};
  }
};

void print_losses(const char* label, const Json& r) {
  std::printf("%-8s l_contrast %.6f  l_complete %.6f  l_kl %.6f  total %.6f  (%s)\n", label,
              r.at("l_contrast").get<double>(), r.at("l_complete").get<double>(), r.at("l_kl").get<double>(),
              r.at("total").get<double>(), r.at("pca_sign").get<std::string>().c_str());
}

void print_metrics(const char* label, const Json& m) {
  const Json& po = m.at("pairwise_overlap");
  std::printf("%-8s distinct_segments %zu  pairwise_overlap %s\n", label, m.at("distinct_segments").get<std::size_t>(),
              po.is_null() ? "n/a" : std::to_string(po.get<double>()).c_str());
}

struct OptimizeArgs {
  ScenarioFlags scen;
  std::uint64_t seed = 0;
  std::string weights;
  std::string out;
  std::string dump;
  std::string config;
  std::optional<std::size_t> max_rounds;
  std::optional<double> lr;
  std::optional<std::size_t> steps;
  std::size_t num_seeds = 1;
};

int cmd_optimize(const OptimizeArgs& a, const CLI::App& cmd) {
  Json cfg = Json::object();
  if (!a.config.empty()) {
    cfg = read_json(a.config);
    if (!cfg.is_object()) usage_error("--config must hold a JSON object");
    if (cfg.contains("schema") && cfg.contains("config")) cfg = cfg.at("config");
  } else {
    if (a.scen.scenario.empty()) usage_error("--scenario or --config is required");
  }
  if (!a.scen.scenario.empty()) {
    cfg.erase("scenario");
    cfg.erase("bundle");
    cfg.update(a.scen.resolve(true));
  }
  Json opt = cfg.contains("optimizer") ? cfg.at("optimizer") : Json::object();
  if (a.config.empty() || cmd.count("--seed")) {
    opt["rng_seed"] = a.seed;
    cfg["seed"] = a.seed;
  }
  if (a.max_rounds) opt["max_rounds"] = *a.max_rounds;
  if (a.lr) opt["learning_rate"] = *a.lr;
  if (a.steps) opt["max_steps_per_round"] = *a.steps;
  cfg["optimizer"] = opt;
  if (!a.weights.empty()) cfg["weights"] = parse_weights(a.weights);

  Json req{{"config", cfg}, {"num_seeds", a.num_seeds}};
  if (!a.dump.empty()) req["dump"] = a.dump;
  LibString out;
  int converged = 0;
  check(coconolab_run_optimize(req.dump().c_str(), &out.p, &converged));
  const Json report = Json::parse(out.str());
  if (!a.out.empty()) write_text_atomic(a.out, out.str());

  if (a.num_seeds <= 1) {
    print_losses("initial", report.at("initial"));
    print_losses("final", report.at("final"));
    print_metrics("initial", report.at("metrics").at("initial"));
    print_metrics("final", report.at("metrics").at("final"));
    std::printf("converged %s after %zu round(s), %zu step(s) evaluated, seed %llu\n",
                converged ? "yes" : "no", report.at("rounds_used").get<std::size_t>(),
                report.at("trace").size(), static_cast<unsigned long long>(report.at("seed").get<std::uint64_t>()));
    for (const auto& n : report.at("notices")) std::printf("notice: %s\n", n.get<std::string>().c_str());
  } else {
    for (const auto& r : report.at("runs"))
      std::printf("seed %llu  converged %s  final total %.6f\n",
                  static_cast<unsigned long long>(r.at("seed").get<std::uint64_t>()),
                  r.at("converged").get<bool>() ? "yes" : "no", r.at("final").at("total").get<double>());
    std::printf("%zu of %zu runs converged\n", report.at("converged_runs").get<std::size_t>(), a.num_seeds);
  }
  return converged ? kExitConverged : kExitBestEffort;
}

struct EvaluateArgs {
  std::string atnz;
  std::size_t subjects = 0;
  std::string weights;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  Json req{{"atnz", a.atnz}, {"n_subjects", a.subjects}};
  if (!a.weights.empty()) req["weights"] = parse_weights(a.weights);
  LibString out;
  check(coconolab_run_evaluate(req.dump().c_str(), &out.p));
  const Json res = Json::parse(out.str());
  if (!a.out.empty()) write_text_atomic(a.out, out.str());
  print_losses("losses", res.at("report"));
  print_metrics("metrics", res.at("metrics"));
  if (res.contains("file_masks")) print_metrics("masks", res.at("file_masks"));
  return kExitConverged;
}

struct RenderArgs {
  std::string atnz;
  std::string out;
  std::size_t scale = 1;
};

int cmd_render(const RenderArgs& a) {
  Json req{{"atnz", a.atnz}, {"out_dir", a.out}, {"scale", a.scale}};
  LibString out;
  check(coconolab_run_render(req.dump().c_str(), &out.p));
  const Json res = Json::parse(out.str());
  for (const auto& f : res.at("files")) std::printf("%s\n", (std::filesystem::path(a.out) / f.get<std::string>()).c_str());
  return kExitConverged;
}

struct GradcheckArgs {
  ScenarioFlags scen;
  std::uint64_t seed = 0;
  std::string weights;
  double h = 1e-5;
  bool sweep = false;
  std::optional<double> sigma;
  std::string out;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  Json req = a.scen.resolve(false);
  req["seed"] = a.seed;
  req["steps"] = a.sweep ? std::vector<double>{1e-4, 1e-5, 1e-6} : std::vector<double>{a.h};
  if (a.sigma) req["sigma"] = *a.sigma;
  if (!a.weights.empty()) req["weights"] = parse_weights(a.weights);
  LibString out;
  int passed = 0;
  check(coconolab_run_gradcheck(req.dump().c_str(), &out.p, &passed));
  const Json res = Json::parse(out.str());
  if (!a.out.empty()) write_text_atomic(a.out, out.str());
  std::printf("%-8s %-12s %-12s %-12s %-8s %s\n", "h", "mu_err", "sigma_err", "total_err", "skipped", "result");
  for (const auto& r : res.at("rows"))
    std::printf("%-8.0e %-12.3e %-12.3e %-12.3e %-8zu %s\n", r.at("h").get<double>(), r.at("mu_error").get<double>(),
                r.at("sigma_error").get<double>(), r.at("error").get<double>(),
                r.at("sigma_skipped").get<std::size_t>(), r.at("pass").get<bool>() ? "pass" : "FAIL");
  for (const auto& n : res.at("notices")) std::printf("notice: %s\n", n.get<std::string>().c_str());
  std::printf("%s\n", passed ? "gradcheck passed" : "gradcheck FAILED");
  return passed ? kExitConverged : kExitError;
}

struct ExportArgs {
  ScenarioFlags scen;
  std::uint64_t seed = 0;
  bool sample = false;
  bool with_masks = false;
  std::string out;
};

int cmd_export(const ExportArgs& a) {
  Json req = a.scen.resolve(false);
  req["seed"] = a.seed;
  req["sample"] = a.sample;
  req["with_masks"] = a.with_masks;
  req["out"] = a.out;
  LibString out;
  check(coconolab_run_export(req.dump().c_str(), &out.p));
  const Json res = Json::parse(out.str());
  std::printf("wrote %s (r=%zu, n=%zu)\n", a.out.c_str(), res.at("r").get<std::size_t>(),
              res.at("n").get<std::size_t>());
  return kExitConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention contrast/complete initial-noise optimization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", coconolab_version());

  OptimizeArgs opt;
  auto* c_opt = app.add_subcommand("optimize", "Optimize the initial latent of a scenario");
  opt.scen.add_to(c_opt, false);
  c_opt->add_option("--seed", opt.seed, "Random seed");
  c_opt->add_option("--weights", opt.weights, "Loss weights l1,l2,l3 (default 1,1,500)");
  c_opt->add_option("--out", opt.out, "Write the run report (JSON) here");
  c_opt->add_option("--dump", opt.dump, "Write the best latent and final maps (ATNZ) here");
  c_opt->add_option("--config", opt.config, "Run config or earlier run report to replay");
  c_opt->add_option("--max-rounds", opt.max_rounds, "Maximum restart rounds");
  c_opt->add_option("--lr", opt.lr, "Adam learning rate");
  c_opt->add_option("--steps", opt.steps, "Maximum steps per round");
  c_opt->add_option("--num-seeds", opt.num_seeds, "Run this many consecutive seeds in parallel")
      ->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Evaluate losses and metrics of an ATNZ bundle");
  c_ev->add_option("--atnz", ev.atnz, "Input ATNZ file")->required();
  c_ev->add_option("--subjects", ev.subjects, "Number of subjects n")->required();
  c_ev->add_option("--weights", ev.weights, "Loss weights l1,l2,l3");
  c_ev->add_option("--out", ev.out, "Write the evaluation (JSON) here");

  RenderArgs rd;
  auto* c_rd = app.add_subcommand("render", "Write graymaps of the maps and segments in an ATNZ bundle");
  c_rd->add_option("--atnz", rd.atnz, "Input ATNZ file")->required();
  c_rd->add_option("--out", rd.out, "Output directory")->required();
  c_rd->add_option("--scale", rd.scale, "Pixels per cell")->check(CLI::PositiveNumber);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  c_gc->set_help_flag("--help", "Print this help message and exit");
  gc.scen.add_to(c_gc, true);
  c_gc->add_option("--seed", gc.seed, "Seed for the evaluation point");
  c_gc->add_option("--weights", gc.weights, "Loss weights l1,l2,l3");
  c_gc->add_option("--h", gc.h, "Finite-difference step")->check(CLI::PositiveNumber);
  c_gc->add_flag("--h-sweep", gc.sweep, "Check at h = 1e-4, 1e-5 and 1e-6");
  c_gc->add_option("--sigma", gc.sigma, "Set every sigma to this value")->check(CLI::PositiveNumber);
  c_gc->add_option("--out", gc.out, "Write the table (JSON) here");

  ExportArgs ex;
  auto* c_ex = app.add_subcommand("export", "Write a synthetic scenario's attention as ATNZ");
  ex.scen.add_to(c_ex, true);
  c_ex->add_option("--seed", ex.seed, "Seed for --sample");
  c_ex->add_flag("--sample", ex.sample, "Use z ~ N(0, I) instead of z = 0");
  c_ex->add_flag("--with-masks", ex.with_masks, "Include subject masks");
  c_ex->add_option("--out", ex.out, "Output ATNZ file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitError;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    if (sub == c_opt) return cmd_optimize(opt, *c_opt);
    if (sub == c_ev) return cmd_evaluate(ev);
    if (sub == c_rd) return cmd_render(rd);
    if (sub == c_gc) return cmd_gradcheck(gc);
    return cmd_export(ex);
  } catch (const Failure& f) {
    std::cerr << "error (" << coconolab_status_name(f.status) << "): " << f.message << "\n";
    if (f.status == COCONOLAB_INVALID_ARGUMENT) std::cerr << "\n" << sub->help();
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
