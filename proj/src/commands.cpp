#include "coconolab/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "coconolab/error.hpp"
#include "coconolab/render.hpp"

namespace coconolab {

namespace {

AtnzRecord grid_record(std::string name, const Grid& g) {
  AtnzRecord rec{std::move(name), {static_cast<std::uint32_t>(g.r), static_cast<std::uint32_t>(g.r)}, {}};
  rec.data.reserve(g.v.size());
  for (double v : g.v) rec.data.push_back(static_cast<float>(v));
  return rec;
}

std::vector<std::string> subject_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back("subject" + std::to_string(j));
  return out;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::unique_ptr<AttentionProducer> producer_for(const RunConfig& cfg) {
  if (!cfg.bundle_file) return make_producer(cfg.scenario);
  BundleFile file = records_to_bundle(read_atnz(*cfg.bundle_file));
  const std::size_t dim = cfg.bundle_latent_dim ? cfg.bundle_latent_dim : 2 * file.bundle.cross.n();
  return std::make_unique<FixedBundleProducer>(std::move(file.bundle), dim);
}

OptimizeOutcome run_optimize(const AttentionProducer& producer, const RunConfig& cfg) {
  OptimizeOutcome out;
  out.result = optimize(producer, cfg.weights, cfg.optimizer, cfg.loss);
  const std::size_t dim = producer.dimension();
  const LossEvaluation initial_eval =
      evaluate_params(producer, init_params(dim), std::vector<double>(dim, 0.0), cfg.weights, cfg.loss);
  out.final_bundle = producer.evaluate(out.result.best_latent.z);
  out.final_eval = evaluate_losses(out.final_bundle, out.result.best_params, cfg.weights, cfg.loss);
  out.report = run_report_to_json(cfg, out.result, compute_metrics(initial_eval), compute_metrics(out.final_eval));
  return out;
}

std::vector<AtnzRecord> optimize_dump_records(const OptimizeOutcome& outcome) {
  const MaskSet masks = subject_masks(outcome.final_eval);
  AttentionBundle bundle = outcome.final_bundle;
  if (bundle.cross.token_labels.empty()) bundle.cross.token_labels = subject_labels(bundle.cross.n());
  std::vector<AtnzRecord> out = bundle_to_records(bundle, &masks);
  const auto& res = outcome.result;
  out.push_back(vector_record("latent_z", res.best_latent.z));
  out.push_back(vector_record("latent_mu", res.best_params.mu));
  out.push_back(vector_record("latent_sigma", res.best_params.sigma));
  out.push_back(vector_record("latent_eps", res.best_latent.base_noise));
  const auto& ev = outcome.final_eval;
  out.push_back(grid_record("principal", ev.principal.principal.map));
  out.push_back(grid_record("principal_inverted", ev.principal.inverted.map));
  out.push_back(grid_record("softened", ev.chosen.softened.map));
  return out;
}

std::size_t thread_cap_from_env() {
  if (const char* env = std::getenv("COCONOLAB_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1, ErrorCode::invalid_argument,
            "COCONOLAB_THREADS must be a positive integer");
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<Json> run_seed_sweep(const RunConfig& cfg, std::size_t num_seeds, std::size_t threads) {
  require(num_seeds >= 1, ErrorCode::invalid_argument, "need at least one seed");
  const auto producer = producer_for(cfg);
  std::vector<Json> reports(num_seeds);
  std::vector<std::exception_ptr> errors(num_seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < num_seeds; i = next++) {
      try {
        RunConfig run = cfg;
        run.optimizer.rng_seed = cfg.optimizer.rng_seed + i;
        reports[i] = run_optimize(*producer, run).report;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, num_seeds);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reports;
}

Json evaluate_bundle(const AttentionBundle& bundle, const std::optional<MaskSet>& file_masks,
                     const LossWeights& weights, const LossConfig& loss) {
  const std::size_t dim = 2 * bundle.cross.n();
  const NoiseParams params = init_params(dim);
  const LossEvaluation ev = evaluate_losses(bundle, params, weights, loss);
  Json out{{"schema", "coconolab.evaluation"},
           {"schema_version", kRunReportVersion},
           {"report", loss_report_to_json(ev.report)},
           {"metrics", metrics_to_json(compute_metrics(ev))}};
  if (file_masks) {
    Json fm{{"count", file_masks->size()},
            {"distinct_segments", count_distinct_segments(*file_masks, default_min_area(file_masks->r))},
            {"pairwise_overlap", file_masks->size() >= 2 ? Json(pairwise_overlap(*file_masks)) : Json(nullptr)}};
    out["file_masks"] = fm;
  }
  return out;
}

Json run_evaluate(const EvaluateRequest& req) {
  BundleFile file = records_to_bundle(read_atnz(req.atnz));
  require(file.bundle.cross.n() == req.n_subjects, ErrorCode::shape_mismatch,
          "file holds " + std::to_string(file.bundle.cross.n()) + " cross maps but " +
              std::to_string(req.n_subjects) + " subjects were requested");
  Json out = evaluate_bundle(file.bundle, file.masks, req.weights, req.loss);
  out["atnz"] = req.atnz.string();
  return out;
}

Json run_render(const RenderRequest& req) {
  BundleFile file = records_to_bundle(read_atnz(req.atnz));
  const auto& bundle = file.bundle;
  const LossEvaluation ev = evaluate_losses(bundle, init_params(2 * bundle.cross.n()), LossWeights{}, req.loss);

  std::error_code ec;
  std::filesystem::create_directories(req.out_dir, ec);
  require(!ec && std::filesystem::is_directory(req.out_dir), ErrorCode::io_error,
          "cannot create output directory '" + req.out_dir.string() + "'");

  Json files = Json::array();
  auto emit = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    write_file_atomic(req.out_dir / name, bytes);
    files.push_back(name);
  };
  for (std::size_t j = 0; j < bundle.cross.n(); ++j)
    emit("cross_" + std::to_string(j) + ".pgm", encode_pgm(bundle.cross.maps[j], req.scale));
  emit("principal.pgm", encode_pgm(ev.principal.principal.map, req.scale));
  emit("principal_inverted.pgm", encode_pgm(ev.principal.inverted.map, req.scale));
  emit("softened.pgm", encode_pgm(ev.chosen.softened.map, req.scale));
  for (std::size_t i = 0; i < ev.chosen.segments.n(); ++i)
    emit("segment_" + std::to_string(i) + ".pgm", encode_pgm(ev.chosen.segments.masks[i], req.scale));
  return Json{{"out_dir", req.out_dir.string()},
              {"pca_sign", pca_sign_name(ev.report.pca_sign_chosen)},
              {"components_found", ev.report.components_found},
              {"files", files}};
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  require(analytic.size() == numeric.size(), ErrorCode::shape_mismatch, "gradient sizes differ");
  std::vector<double> diff(analytic.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
  return norm2(diff) / std::max({norm2(analytic), norm2(numeric), 1e-8});
}

GradcheckPoint gradcheck_point(std::size_t dim, std::uint64_t seed, std::optional<double> sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GradcheckPoint p;
  p.base_noise.resize(dim);
  p.params = init_params(dim);
  for (double& e : p.base_noise) e = normal(rng);
  for (double& m : p.params.mu) m = 0.5 * normal(rng);
  for (double& s : p.params.sigma) s = std::exp(0.25 * normal(rng));
  if (sigma) std::fill(p.params.sigma.begin(), p.params.sigma.end(), *sigma);
  return p;
}

GradcheckOutcome run_gradcheck(const AttentionProducer& producer, const GradcheckRequest& req) {
  require(!req.steps.empty(), ErrorCode::invalid_argument, "gradcheck needs at least one step size");
  const GradcheckPoint point = gradcheck_point(producer.dimension(), req.seed, req.sigma);
  const ParamGradient analytic = param_gradient(producer, point.params, point.base_noise, req.weights, req.loss);

  GradcheckOutcome out;
  out.pass = true;
  for (double h : req.steps) {
    const FiniteDiffGradient fd = finite_diff_gradient(producer, point.params, point.base_noise, req.weights, h,
                                                       req.loss, true, req.sigma_floor);
    GradcheckRow row;
    row.h = h;
    std::vector<double> a_sigma, f_sigma;
    for (std::size_t d = 0; d < fd.sigma.size(); ++d) {
      if (fd.sigma_skipped[d]) {
        ++row.sigma_skipped;
        out.notices.push_back("h=" + std::to_string(h) + ": sigma[" + std::to_string(d) +
                              "] perturbation skipped at the sigma floor");
        continue;
      }
      a_sigma.push_back(analytic.sigma[d]);
      f_sigma.push_back(fd.sigma[d]);
    }
    std::vector<double> a_all = analytic.mu, f_all = fd.mu;
    a_all.insert(a_all.end(), a_sigma.begin(), a_sigma.end());
    f_all.insert(f_all.end(), f_sigma.begin(), f_sigma.end());
    row.mu_error = relative_error(analytic.mu, fd.mu);
    row.sigma_error = a_sigma.empty() ? 0.0 : relative_error(a_sigma, f_sigma);
    row.error = relative_error(a_all, f_all);
    row.pass = row.mu_error < req.tolerance && row.sigma_error < req.tolerance && row.error < req.tolerance;
    out.pass = out.pass && row.pass;
    out.rows.push_back(row);
  }
  return out;
}

Json gradcheck_to_json(const GradcheckRequest& req, const GradcheckOutcome& outcome) {
  Json rows = Json::array();
  for (const auto& r : outcome.rows)
    rows.push_back(Json{{"h", r.h},
                        {"mu_error", r.mu_error},
                        {"sigma_error", r.sigma_error},
                        {"error", r.error},
                        {"sigma_skipped", r.sigma_skipped},
                        {"pass", r.pass}});
  return Json{{"schema", "coconolab.gradcheck"},
              {"schema_version", kRunReportVersion},
              {"scenario", scenario_to_json(req.scenario)},
              {"seed", req.seed},
              {"weights", weights_to_json(req.weights)},
              {"tolerance", req.tolerance},
              {"rows", rows},
              {"notices", outcome.notices},
              {"pass", outcome.pass}};
}

Json run_export(const ExportRequest& req) {
  SyntheticProducer producer(req.scenario);
  const std::size_t dim = producer.dimension();
  std::vector<double> z(dim, 0.0);
  if (req.sample) {
    std::mt19937_64 rng(req.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : z) x = normal(rng);
  }
  AttentionBundle bundle = producer.evaluate(z);
  bundle.cross.token_labels = subject_labels(bundle.cross.n());
  std::optional<MaskSet> masks;
  if (req.with_masks) {
    const LossEvaluation ev = evaluate_losses(bundle, init_params(dim), LossWeights{}, req.loss);
    masks = subject_masks(ev);
  }
  const auto records = bundle_to_records(bundle, masks ? &*masks : nullptr);
  write_atnz(records, req.out);
  return Json{{"out", req.out.string()},
              {"scenario", scenario_to_json(req.scenario)},
              {"latent", z},
              {"records", records.size()},
              {"r", bundle.cross.r},
              {"n", bundle.cross.n()}};
}

}  // namespace coconolab
