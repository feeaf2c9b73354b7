#pragma once

// Whole operations behind the command-line tools: optimize, evaluate, render,
// gradcheck and export. Each returns a JSON document describing its outcome.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coconolab/atnz.hpp"
#include "coconolab/report.hpp"

namespace coconolab {

/// The synthetic producer of the scenario, or a fixed producer serving the
/// bundle file.
std::unique_ptr<AttentionProducer> producer_for(const RunConfig& cfg);

struct OptimizeOutcome {
  OptimizationResult result;
  LossEvaluation final_eval;  // at the best latent
  AttentionBundle final_bundle;
  Json report;
};

OptimizeOutcome run_optimize(const AttentionProducer& producer, const RunConfig& cfg);

/// Best latent (z, μ, σ, ε), the attention and maps there, and subject masks.
std::vector<AtnzRecord> optimize_dump_records(const OptimizeOutcome& outcome);

/// Runs seeds seed, seed+1, ... on up to `threads` workers; reports in seed order.
std::vector<Json> run_seed_sweep(const RunConfig& cfg, std::size_t num_seeds, std::size_t threads);

/// Worker count from COCONOLAB_THREADS, else the hardware concurrency.
std::size_t thread_cap_from_env();

struct EvaluateRequest {
  std::filesystem::path atnz;
  std::size_t n_subjects = 0;
  LossWeights weights;
  LossConfig loss;
};

Json evaluate_bundle(const AttentionBundle& bundle, const std::optional<MaskSet>& file_masks,
                     const LossWeights& weights, const LossConfig& loss);
Json run_evaluate(const EvaluateRequest& req);

struct RenderRequest {
  std::filesystem::path atnz;
  std::filesystem::path out_dir;
  std::size_t scale = 1;
  LossConfig loss;
};

/// Writes cross_<j>.pgm, principal.pgm, principal_inverted.pgm, softened.pgm
/// and segment_<i>.pgm; returns the written file names.
Json run_render(const RenderRequest& req);

struct GradcheckRequest {
  ScenarioSpec scenario;
  std::uint64_t seed = 0;
  std::vector<double> steps{1e-5};
  std::optional<double> sigma;  // overrides the sampled σ everywhere
  LossWeights weights;
  LossConfig loss;
  double tolerance = 1e-4;
  double sigma_floor = 1e-4;
};

struct GradcheckRow {
  double h = 0.0;
  double mu_error = 0.0;
  double sigma_error = 0.0;
  double error = 0.0;  // over μ and the checked σ entries together
  std::size_t sigma_skipped = 0;
  bool pass = false;
};

struct GradcheckOutcome {
  std::vector<GradcheckRow> rows;
  std::vector<std::string> notices;
  bool pass = false;
};

/// ‖a − f‖ / max(‖a‖, ‖f‖, 1e-8).
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// The (μ, σ, ε) a gradient check with this seed evaluates at.
struct GradcheckPoint {
  NoiseParams params;
  std::vector<double> base_noise;
};
GradcheckPoint gradcheck_point(std::size_t dim, std::uint64_t seed, std::optional<double> sigma);

GradcheckOutcome run_gradcheck(const AttentionProducer& producer, const GradcheckRequest& req);
Json gradcheck_to_json(const GradcheckRequest& req, const GradcheckOutcome& outcome);

struct ExportRequest {
  ScenarioSpec scenario;
  std::uint64_t seed = 0;
  bool sample = false;  // z ~ N(0, I) from the seed instead of z = 0
  bool with_masks = false;
  std::filesystem::path out;
  LossConfig loss;
};

Json run_export(const ExportRequest& req);

}  // namespace coconolab
