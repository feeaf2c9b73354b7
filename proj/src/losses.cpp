#include "coconolab/losses.hpp"

#include <cmath>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

double ratio_or_zero(double overlap, double mass) { return mass > 0.0 ? overlap / mass : 0.0; }

void check_consistent(const AssignmentMatrix& assign, const CostMatrix& cost, const SegmentSet& segments) {
  require(assign.n() == cost.n && cost.n == segments.n(), ErrorCode::shape_mismatch,
          "assignment, cost and segments disagree on n");
}

// First index attaining the minimum diagonal ratio.
std::size_t weakest_segment(const AssignmentMatrix& assign, const CostMatrix& cost, const SegmentSet& segments) {
  std::size_t best = 0;
  double best_ratio = 0.0;
  for (std::size_t i = 0; i < cost.n; ++i) {
    const double ratio = ratio_or_zero(cost(i, assign.perm[i]), segments.masses[i]);
    if (i == 0 || ratio < best_ratio) {
      best = i;
      best_ratio = ratio;
    }
  }
  return best;
}

SignEvaluation evaluate_sign(PcaSign sign, const PrincipalMaps& maps, const CrossAttentionStack& cross,
                             const LossConfig& cfg) {
  SignEvaluation ev;
  ev.sign = sign;
  const SaliencyMap& base = sign == PcaSign::principal ? maps.principal : maps.inverted;
  ev.softened = soften(base, cfg.alpha, cfg.beta);
  ev.threshold = otsu_threshold(ev.softened);
  ev.segments = extract_segments(ev.softened, ev.threshold, cross.n());
  ev.cost = cost_matrix(ev.segments, cross);
  ev.assignment = optimal_assignment(ev.cost);
  ev.contrast = attention_contrast(ev.assignment, ev.cost, ev.segments);
  ev.complete = attention_complete(ev.assignment, ev.cost, ev.segments);
  return ev;
}

}  // namespace

const char* pca_sign_name(PcaSign sign) noexcept {
  return sign == PcaSign::principal ? "principal" : "principal-inverted";
}

void NoiseParams::validate() const {
  require(!mu.empty(), ErrorCode::invalid_argument, "noise parameters are empty");
  require(mu.size() == sigma.size(), ErrorCode::shape_mismatch, "mu and sigma lengths differ");
  for (std::size_t d = 0; d < mu.size(); ++d) {
    require(std::isfinite(mu[d]) && std::isfinite(sigma[d]), ErrorCode::non_finite,
            "noise parameter is not finite");
    require(sigma[d] > 0.0, ErrorCode::invalid_argument, "sigma must be positive");
  }
}

void LossWeights::validate() const {
  for (double w : {contrast, complete, kl})
    require(std::isfinite(w) && w >= 0.0, ErrorCode::invalid_argument, "loss weights must be finite and nonnegative");
}

double attention_contrast(const AssignmentMatrix& assign, const CostMatrix& cost, const SegmentSet& segments) {
  check_consistent(assign, cost, segments);
  const CostMatrix m = assigned_cost(cost, assign);
  double total = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double mass = segments.masses[i];
    if (!(mass > 0.0)) continue;
    for (std::size_t k = 0; k < m.n; ++k)
      if (k != i) total += m(i, k) / mass;
  }
  return total;
}

double attention_complete(const AssignmentMatrix& assign, const CostMatrix& cost, const SegmentSet& segments) {
  check_consistent(assign, cost, segments);
  const std::size_t i = weakest_segment(assign, cost, segments);
  return 1.0 - ratio_or_zero(cost(i, assign.perm[i]), segments.masses[i]);
}

double kl_gaussian(const NoiseParams& params) {
  params.validate();
  double total = 0.0;
  for (std::size_t d = 0; d < params.mu.size(); ++d) {
    const double m = params.mu[d];
    const double s = params.sigma[d];
    total += 0.5 * (m * m + s * s - 1.0 - 2.0 * std::log(s));
  }
  return total / static_cast<double>(params.mu.size());
}

void AttentionBundle::validate() const {
  cross.validate();
  self.validate();
  require(cross.r == self.r, ErrorCode::shape_mismatch, "cross and self resolutions differ");
}

BundleCotangent BundleCotangent::zeros_like(const AttentionBundle& b) {
  BundleCotangent ct;
  ct.cross.assign(b.cross.n(), Grid(b.cross.r));
  ct.self.assign(b.self.values.size(), 0.0);
  return ct;
}

AttentionBundle FixedBundleProducer::evaluate(std::span<const double> z) const {
  require(z.size() == dim_, ErrorCode::shape_mismatch, "latent dimension mismatch");
  return bundle_;
}

std::vector<double> FixedBundleProducer::vjp(std::span<const double>, const BundleCotangent&) const {
  fail(ErrorCode::producer_failure, "file-backed producer has no gradient");
}

LossEvaluation evaluate_losses(const AttentionBundle& bundle, const NoiseParams& params,
                               const LossWeights& weights, const LossConfig& cfg) {
  bundle.validate();
  weights.validate();
  LossEvaluation out;
  out.smoothed_cross = cfg.smoothing ? smooth_cross_attention(bundle.cross, *cfg.smoothing) : bundle.cross;
  out.principal = principal_self_map(bundle.self, cfg.pca);

  SignEvaluation a = evaluate_sign(PcaSign::principal, out.principal, out.smoothed_cross, cfg);
  SignEvaluation b = evaluate_sign(PcaSign::inverted, out.principal, out.smoothed_cross, cfg);
  const double score_a = weights.contrast * a.contrast + weights.complete * a.complete;
  const double score_b = weights.contrast * b.contrast + weights.complete * b.complete;
  if (score_b < score_a) std::swap(a, b);
  out.chosen = std::move(a);
  out.other = std::move(b);

  const auto& ev = out.chosen;
  auto& rep = out.report;
  const std::size_t n = bundle.cross.n();
  rep.n = n;
  rep.l_contrast = ev.contrast;
  rep.l_complete = ev.complete;
  rep.l_kl = kl_gaussian(params);
  rep.total = weights.contrast * rep.l_contrast + weights.complete * rep.l_complete + weights.kl * rep.l_kl;
  rep.pca_sign_chosen = ev.sign;
  rep.assignment = ev.assignment.perm;
  rep.segment_masses = ev.segments.masses;
  rep.components_found = ev.segments.components_found;
  rep.threshold = ev.threshold;
  const CostMatrix m = assigned_cost(ev.cost, ev.assignment);
  rep.interference_table.assign(n * n, 0.0);
  rep.coverage.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double mass = ev.segments.masses[i];
    rep.coverage[i] = ratio_or_zero(m(i, i), mass);
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) rep.interference_table[i * n + k] = ratio_or_zero(m(i, k), mass);
  }
  return out;
}

LossGradients loss_gradients(const AttentionBundle& bundle, const LossEvaluation& eval,
                             const NoiseParams& params, const LossWeights& weights, const LossConfig& cfg) {
  params.validate();
  const auto& ev = eval.chosen;
  const auto& seg = ev.segments;
  const auto& cross = eval.smoothed_cross;
  const std::size_t n = cross.n();
  const std::size_t r = cross.r;
  const auto& perm = ev.assignment.perm;

  LossGradients g;
  g.smoothed_cross.assign(n, Grid(r));
  g.softened = Grid(r);

  // Per-segment cotangent on the segment values; scattered into the softened
  // map through the (fixed) masks afterwards.
  std::vector<Grid> g_values(n, Grid(r));

  if (weights.contrast != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double mass = seg.masses[i];
      if (!(mass > 0.0)) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == perm[i]) continue;
        const double ratio = ev.cost(i, j) / mass;
        for (std::size_t c = 0; c < r * r; ++c) {
          g.smoothed_cross[j][c] += weights.contrast * seg.values[i][c] / mass;
          g_values[i][c] += weights.contrast * (cross.maps[j][c] - ratio) / mass;
        }
      }
    }
  }

  if (weights.complete != 0.0) {
    const std::size_t i = weakest_segment(ev.assignment, ev.cost, seg);
    const double mass = seg.masses[i];
    if (mass > 0.0) {
      const std::size_t j = perm[i];
      const double ratio = ev.cost(i, j) / mass;
      for (std::size_t c = 0; c < r * r; ++c) {
        g.smoothed_cross[j][c] -= weights.complete * seg.values[i][c] / mass;
        g_values[i][c] -= weights.complete * (cross.maps[j][c] - ratio) / mass;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < r * r; ++c)
      if (seg.masks[i][c]) g.softened[c] += g_values[i][c];

  g.bundle.cross = cfg.smoothing ? smooth_cross_attention_vjp(bundle.cross, *cfg.smoothing, g.smoothed_cross)
                                 : g.smoothed_cross;
  const SaliencyKind kind =
      ev.sign == PcaSign::principal ? SaliencyKind::principal : SaliencyKind::principal_inverted;
  const Grid g_map = soften_vjp(eval.principal.get(kind), cfg.alpha, cfg.beta, g.softened);
  g.bundle.self = principal_self_map_vjp(eval.principal, kind, g_map);

  const std::size_t dim = params.dimension();
  const double scale = weights.kl / static_cast<double>(dim);
  g.mu.resize(dim);
  g.sigma.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    g.mu[d] = scale * params.mu[d];
    g.sigma[d] = scale * (params.sigma[d] - 1.0 / params.sigma[d]);
  }
  return g;
}

}  // namespace coconolab
