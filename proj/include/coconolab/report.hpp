#pragma once

// JSON forms of configurations, loss reports and run reports. A run report
// echoes its full configuration; feeding that echo back replays the run.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "coconolab/evaluation.hpp"
#include "coconolab/losses.hpp"
#include "coconolab/optimizer.hpp"
#include "coconolab/synthetic.hpp"

namespace coconolab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kRunReportSchema = "coconolab.run_report";
inline constexpr int kRunReportVersion = 1;

// Everything that determines an optimization run.
struct RunConfig {
  ScenarioSpec scenario;
  // When set, attention comes from this ATNZ file instead of the scenario and
  // the run is a single evaluation.
  std::optional<std::filesystem::path> bundle_file;
  std::size_t bundle_latent_dim = 0;  // 0 means 2n
  OptimizerConfig optimizer;
  LossWeights weights;
  LossConfig loss;
};

Json scenario_to_json(const ScenarioSpec& spec);
/// Accepts a full description or a short one ({"kind", "n_subjects", "r",
/// "latent_dim"}) whose remaining fields default to the built-in scenario.
ScenarioSpec scenario_from_json(const Json& j);

Json optimizer_to_json(const OptimizerConfig& cfg);
OptimizerConfig optimizer_from_json(const Json& j, OptimizerConfig base = {});
Json weights_to_json(const LossWeights& w);
LossWeights weights_from_json(const Json& j);
Json loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const Json& j);

Json run_config_to_json(const RunConfig& cfg);
/// Accepts a config object or a run report carrying one under "config".
RunConfig run_config_from_json(const Json& j);

Json loss_report_to_json(const LossReport& report);

struct RunMetrics {
  std::size_t min_area = 0;
  std::size_t distinct_segments = 0;
  std::optional<double> pairwise_overlap;  // needs at least two subjects
};

RunMetrics compute_metrics(const LossEvaluation& eval);
Json metrics_to_json(const RunMetrics& m);

Json run_report_to_json(const RunConfig& cfg, const OptimizationResult& result, const RunMetrics& initial,
                        const RunMetrics& final);

/// Parses JSON text, reporting syntax errors as malformed.
Json parse_json(const std::string& text, const std::string& what);
Json read_json_file(const std::filesystem::path& path);

}  // namespace coconolab
