#include "coconolab/attention.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numeric>

#include <Eigen/Dense>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t exact_sqrt(std::size_t cells) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cells))));
  require(r * r == cells, ErrorCode::shape_mismatch,
          "cell count " + std::to_string(cells) + " is not a perfect square");
  return r;
}

// Reflect without repeating the edge sample: -1 -> 1, r -> r-2.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t r) {
  const auto n = static_cast<std::ptrdiff_t>(r);
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

std::vector<double> gaussian_kernel_1d(const SmoothingConfig& cfg) {
  const auto half = static_cast<std::ptrdiff_t>(cfg.kernel_size / 2);
  std::vector<double> k(cfg.kernel_size);
  double total = 0.0;
  for (std::ptrdiff_t i = -half; i <= half; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (cfg.sigma * cfg.sigma));
    k[static_cast<std::size_t>(i + half)] = w;
    total += w;
  }
  for (double& w : k) w /= total;
  return k;
}

std::size_t argmax_index(const Grid& g) {
  return static_cast<std::size_t>(std::max_element(g.v.begin(), g.v.end()) - g.v.begin());
}

}  // namespace

void CrossAttentionStack::validate() const {
  require(r >= 2, ErrorCode::shape_mismatch, "cross-attention resolution must be at least 2");
  require(!maps.empty(), ErrorCode::shape_mismatch, "cross-attention stack has no subject maps");
  require(token_labels.empty() || token_labels.size() == maps.size(), ErrorCode::shape_mismatch,
          "token label count does not match the number of maps");
  for (const Grid& g : maps) {
    require(g.r == r && g.cells() == r * r, ErrorCode::shape_mismatch,
            "cross-attention map has the wrong resolution");
    for (double x : g.v) {
      require(std::isfinite(x), ErrorCode::non_finite, "cross-attention entry is not finite");
      require(x >= 0.0 && x <= 1.0, ErrorCode::invalid_argument,
              "cross-attention entry outside [0,1]");
    }
  }
}

void SelfAttentionTensor::validate() const {
  require(r >= 2, ErrorCode::shape_mismatch, "self-attention resolution must be at least 2");
  require(values.size() == cells() * cells(), ErrorCode::shape_mismatch,
          "self-attention tensor must be r²×r²");
  for (double x : values) {
    require(std::isfinite(x), ErrorCode::non_finite, "self-attention entry is not finite");
    require(x >= 0.0, ErrorCode::invalid_argument, "self-attention entry is negative");
  }
}

void SmoothingConfig::validate() const {
  require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorCode::invalid_argument,
          "smoothing kernel size must be odd and positive");
  require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::invalid_argument,
          "smoothing sigma must be positive");
}

CrossAttentionStack aggregate_cross_attention(std::span<const RawAttentionLayer> layers,
                                              std::span<const std::size_t> subject_token_indices,
                                              std::vector<std::string> token_labels) {
  require(!layers.empty(), ErrorCode::invalid_argument, "no attention layers to aggregate");
  require(!subject_token_indices.empty(), ErrorCode::invalid_argument, "no subject tokens selected");
  const std::size_t cells = layers.front().cells;
  const std::size_t tokens = layers.front().tokens;
  const std::size_t r = exact_sqrt(cells);
  for (const auto& layer : layers) {
    require(layer.cells == cells && layer.tokens == tokens, ErrorCode::shape_mismatch,
            "attention layers disagree on cell or token count");
    require(layer.heads >= 1, ErrorCode::shape_mismatch, "attention layer has no heads");
    require(layer.values.size() == layer.heads * cells * tokens, ErrorCode::shape_mismatch,
            "attention layer payload does not match its shape");
  }
  for (std::size_t idx : subject_token_indices) {
    require(idx != 0, ErrorCode::invalid_argument, "token index 0 is the start token");
    require(idx < tokens, ErrorCode::invalid_argument,
            "subject token index " + std::to_string(idx) + " out of range");
  }

  CrossAttentionStack out;
  out.r = r;
  out.token_labels = std::move(token_labels);
  for (std::size_t token : subject_token_indices) {
    Grid mean(r);
    Grid head_map(r);
    for (const auto& layer : layers) {
      for (std::size_t h = 0; h < layer.heads; ++h) {
        double peak = 0.0;
        for (std::size_t c = 0; c < cells; ++c) {
          head_map[c] = layer.at(h, c, token);
          peak = std::max(peak, head_map[c]);
        }
        if (peak <= 0.0) continue;
        for (std::size_t c = 0; c < cells; ++c) mean[c] += head_map[c] / peak;
      }
    }
    const double peak = mean.max();
    // Dividing by the head count would cancel in the rescale.
    for (double& x : mean.v) x = peak > 0.0 ? x / peak : 0.0;
    out.maps.push_back(std::move(mean));
  }
  return out;
}

Grid gaussian_blur(const Grid& map, const SmoothingConfig& cfg) {
  cfg.validate();
  const std::size_t r = map.r;
  require(cfg.kernel_size <= 2 * r - 1, ErrorCode::invalid_argument,
          "smoothing kernel larger than 2r-1");
  const auto k1 = gaussian_kernel_1d(cfg);
  const auto half = static_cast<std::ptrdiff_t>(cfg.kernel_size / 2);
  Grid out(r);
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t l = 0; l < r; ++l) {
      double acc = 0.0;
      for (std::ptrdiff_t dk = -half; dk <= half; ++dk) {
        const std::size_t sk = reflect_index(static_cast<std::ptrdiff_t>(k) + dk, r);
        const double wk = k1[static_cast<std::size_t>(dk + half)];
        for (std::ptrdiff_t dl = -half; dl <= half; ++dl) {
          const std::size_t sl = reflect_index(static_cast<std::ptrdiff_t>(l) + dl, r);
          acc += wk * k1[static_cast<std::size_t>(dl + half)] * map(sk, sl);
        }
      }
      out(k, l) = acc;
    }
  }
  return out;
}

Grid gaussian_blur_vjp(const Grid& cotangent, const SmoothingConfig& cfg) {
  cfg.validate();
  const std::size_t r = cotangent.r;
  require(cfg.kernel_size <= 2 * r - 1, ErrorCode::invalid_argument,
          "smoothing kernel larger than 2r-1");
  const auto k1 = gaussian_kernel_1d(cfg);
  const auto half = static_cast<std::ptrdiff_t>(cfg.kernel_size / 2);
  Grid out(r);
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t l = 0; l < r; ++l) {
      const double g = cotangent(k, l);
      if (g == 0.0) continue;
      for (std::ptrdiff_t dk = -half; dk <= half; ++dk) {
        const std::size_t sk = reflect_index(static_cast<std::ptrdiff_t>(k) + dk, r);
        const double wk = k1[static_cast<std::size_t>(dk + half)];
        for (std::ptrdiff_t dl = -half; dl <= half; ++dl) {
          const std::size_t sl = reflect_index(static_cast<std::ptrdiff_t>(l) + dl, r);
          out(sk, sl) += g * wk * k1[static_cast<std::size_t>(dl + half)];
        }
      }
    }
  }
  return out;
}

CrossAttentionStack smooth_cross_attention(const CrossAttentionStack& stack, const SmoothingConfig& cfg) {
  CrossAttentionStack out;
  out.r = stack.r;
  out.token_labels = stack.token_labels;
  out.maps.reserve(stack.maps.size());
  for (const Grid& g : stack.maps) {
    Grid blurred = gaussian_blur(g, cfg);
    const double peak = blurred.max();
    if (peak > 0.0)
      for (double& x : blurred.v) x /= peak;
    out.maps.push_back(std::move(blurred));
  }
  return out;
}

std::vector<Grid> smooth_cross_attention_vjp(const CrossAttentionStack& input,
                                             const SmoothingConfig& cfg,
                                             std::span<const Grid> cotangent) {
  require(cotangent.size() == input.maps.size(), ErrorCode::shape_mismatch,
          "cotangent count does not match the stack");
  std::vector<Grid> out;
  out.reserve(input.maps.size());
  for (std::size_t j = 0; j < input.maps.size(); ++j) {
    const Grid blurred = gaussian_blur(input.maps[j], cfg);
    const std::size_t m = argmax_index(blurred);
    const double peak = blurred[m];
    const Grid& g = cotangent[j];
    Grid g_blur(input.r);
    if (peak > 0.0) {
      // y = b / b[m]  =>  ∂L/∂b = g / b[m] − e_m · (g·b) / b[m]²
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cells(); ++c) dot += g[c] * blurred[c];
      for (std::size_t c = 0; c < g.cells(); ++c) g_blur[c] = g[c] / peak;
      g_blur[m] -= dot / (peak * peak);
    }
    out.push_back(gaussian_blur_vjp(g_blur, cfg));
  }
  return out;
}

PrincipalMaps principal_self_map(const SelfAttentionTensor& self_attn, const PcaOptions& opts) {
  self_attn.validate();
  const std::size_t r = self_attn.r;
  const std::size_t n = self_attn.cells();
  Eigen::Map<const RowMatrix> a(self_attn.values.data(), static_cast<Eigen::Index>(n),
                                static_cast<Eigen::Index>(n));
  const Eigen::RowVectorXd col_mean = a.colwise().mean();
  RowMatrix x = a.rowwise() - col_mean;
  require(x.cwiseAbs().maxCoeff() > 0.0, ErrorCode::degenerate_input,
          "self-attention rows are all identical");
  const Eigen::MatrixXd cov = x.transpose() * x;

  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = 1.0 + static_cast<double>(i + 1) / static_cast<double>(n);
  v.normalize();
  std::size_t it = 0;
  bool converged = false;
  while (it < opts.max_iterations) {
    Eigen::VectorXd next = cov * v;
    const double norm = next.norm();
    require(norm > 0.0, ErrorCode::degenerate_input, "power iteration collapsed to zero");
    next /= norm;
    ++it;
    const double change = (next - v).norm();
    v = std::move(next);
    if (change < opts.tolerance) {
      converged = true;
      break;
    }
  }
  require(converged, ErrorCode::convergence_failure,
          "power iteration did not converge within " + std::to_string(opts.max_iterations) + " iterations");

  Eigen::Index lead = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[lead])) lead = i;
  if (v[lead] < 0.0) v = -v;

  const Eigen::VectorXd scores = x * v;
  PrincipalMaps out;
  auto& proj = out.projection;
  proj.cells = n;
  proj.iterations = it;
  proj.eigenvalue = v.dot(cov * v);
  proj.direction.assign(v.data(), v.data() + n);
  proj.scores.assign(scores.data(), scores.data() + n);
  proj.centered.assign(x.data(), x.data() + n * n);
  proj.argmin = static_cast<std::size_t>(std::min_element(proj.scores.begin(), proj.scores.end()) - proj.scores.begin());
  proj.argmax = static_cast<std::size_t>(std::max_element(proj.scores.begin(), proj.scores.end()) - proj.scores.begin());
  const double lo = proj.scores[proj.argmin];
  const double range = proj.scores[proj.argmax] - lo;
  require(range > 0.0, ErrorCode::degenerate_input, "principal component scores are constant");

  out.principal.kind = SaliencyKind::principal;
  out.inverted.kind = SaliencyKind::principal_inverted;
  out.principal.map = Grid(r);
  out.inverted.map = Grid(r);
  for (std::size_t c = 0; c < n; ++c) {
    const double m = (proj.scores[c] - lo) / range;
    out.principal.map[c] = m;
    out.inverted.map[c] = 1.0 - m;
  }
  return out;
}

std::vector<double> principal_self_map_vjp(const PrincipalMaps& maps, SaliencyKind which,
                                           const Grid& map_cotangent) {
  const auto& proj = maps.projection;
  const std::size_t n = proj.cells;
  require(map_cotangent.cells() == n, ErrorCode::shape_mismatch, "map cotangent has the wrong size");
  const double sign = which == SaliencyKind::principal_inverted ? -1.0 : 1.0;
  const double lo = proj.scores[proj.argmin];
  const double range = proj.scores[proj.argmax] - lo;

  // min-max normalization
  Eigen::VectorXd g_scores(static_cast<Eigen::Index>(n));
  double g_total = 0.0;
  double g_spread = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double g = sign * map_cotangent[c];
    g_scores[static_cast<Eigen::Index>(c)] = g / range;
    g_total += g;
    g_spread += g * (proj.scores[c] - lo);
  }
  g_spread /= range * range;
  g_scores[static_cast<Eigen::Index>(proj.argmin)] += -g_total / range + g_spread;
  g_scores[static_cast<Eigen::Index>(proj.argmax)] -= g_spread;

  Eigen::Map<const RowMatrix> x(proj.centered.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::Map<const Eigen::VectorXd> v(proj.direction.data(), static_cast<Eigen::Index>(n));

  // scores = X v
  RowMatrix g_x = g_scores * v.transpose();
  Eigen::VectorXd g_v = x.transpose() * g_scores;

  // v = leading eigenvector of Cov = XᵀX:  dv = (λI − Cov)⁺ dCov v
  const Eigen::MatrixXd cov = x.transpose() * x;
  const double lambda = proj.eigenvalue;
  Eigen::MatrixXd shifted = -cov;
  shifted.diagonal().array() += lambda;
  shifted += lambda * v * v.transpose();
  const Eigen::VectorXd projected = g_v - v * v.dot(g_v);
  const Eigen::VectorXd w = shifted.ldlt().solve(projected);
  const Eigen::MatrixXd g_cov = w * v.transpose();
  g_x += x * (g_cov + g_cov.transpose());

  // column centering
  const Eigen::RowVectorXd g_mean = g_x.colwise().mean();
  g_x.rowwise() -= g_mean;

  return std::vector<double>(g_x.data(), g_x.data() + n * n);
}

SaliencyMap soften(const SaliencyMap& map, double alpha, double beta) {
  SaliencyMap out{Grid(map.map.r), SaliencyKind::softened};
  for (std::size_t c = 0; c < map.map.cells(); ++c)
    out.map[c] = 1.0 / (1.0 + std::exp(-alpha * (map.map[c] - beta)));
  return out;
}

Grid soften_vjp(const SaliencyMap& input, double alpha, double beta, const Grid& cotangent) {
  Grid out(input.map.r);
  for (std::size_t c = 0; c < input.map.cells(); ++c) {
    const double s = 1.0 / (1.0 + std::exp(-alpha * (input.map[c] - beta)));
    out[c] = cotangent[c] * alpha * s * (1.0 - s);
  }
  return out;
}

std::size_t otsu_bin(double value) noexcept {
  if (!(value > 0.0)) return 0;
  const double scaled = std::floor(value * static_cast<double>(kOtsuBins));
  if (scaled >= static_cast<double>(kOtsuBins - 1)) return kOtsuBins - 1;
  return static_cast<std::size_t>(scaled);
}

double otsu_threshold(const Grid& map) {
  require(map.cells() > 0, ErrorCode::degenerate_input, "empty map");
  std::array<std::uint64_t, kOtsuBins> hist{};
  for (double x : map.v) {
    require(std::isfinite(x), ErrorCode::non_finite, "map entry is not finite");
    ++hist[otsu_bin(x)];
  }
  const auto total = static_cast<std::int64_t>(map.cells());
  std::int64_t total_sum = 0;
  for (std::size_t b = 0; b < kOtsuBins; ++b) total_sum += static_cast<std::int64_t>(b * hist[b]);

  // Between-class variance ∝ (n0·S1 − n1·S0)² / (n0·n1); compared exactly.
  using u128 = unsigned __int128;
  u128 best_num = 0;
  u128 best_den = 1;
  std::ptrdiff_t best_k = -1;
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  for (std::size_t k = 0; k + 1 < kOtsuBins; ++k) {
    n0 += static_cast<std::int64_t>(hist[k]);
    s0 += static_cast<std::int64_t>(k * hist[k]);
    const std::int64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t s1 = total_sum - s0;
    const __int128 diff = static_cast<__int128>(n0) * s1 - static_cast<__int128>(n1) * s0;
    const u128 num = static_cast<u128>(diff < 0 ? -diff : diff) * static_cast<u128>(diff < 0 ? -diff : diff);
    const u128 den = static_cast<u128>(n0) * static_cast<u128>(n1);
    if (best_k < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_k = static_cast<std::ptrdiff_t>(k);
    }
  }
  require(best_k >= 0, ErrorCode::degenerate_input, "map is constant; no Otsu split exists");
  return static_cast<double>(best_k + 1) / static_cast<double>(kOtsuBins);
}

SegmentSet extract_segments(const SaliencyMap& softened, double threshold, std::size_t n) {
  require(n >= 1, ErrorCode::invalid_argument, "segment count must be at least 1");
  const Grid& map = softened.map;
  const std::size_t r = map.r;
  const std::size_t cells = map.cells();

  struct Component {
    std::vector<std::size_t> cells;
    double mass = 0.0;
  };
  std::vector<Component> comps;
  std::vector<std::uint8_t> seen(cells, 0);
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < cells; ++start) {
    if (seen[start] || !(map[start] >= threshold)) continue;
    Component comp;
    seen[start] = 1;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t c = queue.front();
      queue.pop_front();
      comp.cells.push_back(c);
      comp.mass += map[c];
      const std::size_t k = c / r;
      const std::size_t l = c % r;
      const std::size_t nbr[4] = {k > 0 ? c - r : cells, k + 1 < r ? c + r : cells,
                                  l > 0 ? c - 1 : cells, l + 1 < r ? c + 1 : cells};
      for (std::size_t d : nbr) {
        if (d == cells || seen[d] || !(map[d] >= threshold)) continue;
        seen[d] = 1;
        queue.push_back(d);
      }
    }
    comps.push_back(std::move(comp));
  }
  // Components are discovered in raster order of their first cell, so a stable
  // sort keeps that order among equal masses.
  std::stable_sort(comps.begin(), comps.end(),
                   [](const Component& a, const Component& b) { return a.mass > b.mass; });

  SegmentSet out;
  out.components_found = comps.size();
  for (std::size_t i = 0; i < n; ++i) {
    Mask mask(r);
    Grid values(r);
    double mass = 0.0;
    if (i < comps.size()) {
      for (std::size_t c : comps[i].cells) {
        mask[c] = 1;
        values[c] = map[c];
      }
      for (double x : values.v) mass += x;
    }
    out.masks.push_back(std::move(mask));
    out.values.push_back(std::move(values));
    out.masses.push_back(mass);
  }
  return out;
}

}  // namespace coconolab
