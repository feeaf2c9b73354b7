#include "coconolab/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "coconolab/error.hpp"

namespace coconolab {

namespace {

struct Displacement {
  double value;
  double slope;  // d value / dz
};

Displacement displace(double gain, double reach, double z) {
  if (gain == 0.0) return {0.0, 0.0};
  const double t = std::tanh(gain * z / reach);
  return {reach * t, gain * (1.0 - t * t)};
}

}  // namespace

const char* scenario_kind_name(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::neglect: return "neglect";
    case ScenarioKind::interference: return "interference";
    case ScenarioKind::aligned: return "aligned";
    case ScenarioKind::custom: return "custom";
  }
  return "custom";
}

ScenarioKind parse_scenario_kind(const std::string& name) {
  if (name == "neglect") return ScenarioKind::neglect;
  if (name == "interference") return ScenarioKind::interference;
  if (name == "aligned") return ScenarioKind::aligned;
  if (name == "custom") return ScenarioKind::custom;
  fail(ErrorCode::invalid_argument, "unknown scenario kind '" + name + "'");
}

void ScenarioSpec::validate() const {
  require(n_subjects >= 1, ErrorCode::invalid_argument, "scenario needs at least one subject");
  require(r >= 4, ErrorCode::invalid_argument, "scenario resolution must be at least 4");
  require(latent_dim >= 2 * n_subjects, ErrorCode::invalid_argument,
          "latent dimension must be at least twice the subject count");
  require(blobs.size() == n_subjects, ErrorCode::invalid_argument, "one blob spec per subject required");
  for (double w : {self_width, cross_width, cross_order, reach})
    require(std::isfinite(w) && w > 0.0, ErrorCode::invalid_argument,
            "widths, cross order and reach must be positive");
  require(cross_order >= 1.0, ErrorCode::invalid_argument, "cross order must be at least 1");
  require(std::isfinite(background) && background >= 0.0, ErrorCode::invalid_argument,
          "background weight must be nonnegative");
  require(std::isfinite(foreground_coupling) && foreground_coupling >= 0.0, ErrorCode::invalid_argument,
          "foreground coupling must be nonnegative");
  for (const auto& b : blobs) {
    for (double x : {b.self_x, b.self_y, b.cross_x, b.cross_y, b.self_gain, b.cross_gain})
      require(std::isfinite(x), ErrorCode::invalid_argument, "blob parameters must be finite");
    require(b.amplitude > 0.0 && b.amplitude <= 1.0, ErrorCode::invalid_argument,
            "blob amplitude must lie in (0, 1]");
  }
}

ScenarioSpec make_scenario(ScenarioKind kind, std::size_t n_subjects, std::size_t r, std::size_t latent_dim) {
  require(kind != ScenarioKind::custom, ErrorCode::invalid_argument,
          "custom scenarios are described explicitly");
  require(n_subjects >= 1, ErrorCode::invalid_argument, "scenario needs at least one subject");
  ScenarioSpec s;
  s.kind = kind;
  s.n_subjects = n_subjects;
  s.r = r;
  s.latent_dim = latent_dim == 0 ? 2 * n_subjects : latent_dim;
  const double rd = static_cast<double>(r);
  s.self_width = rd / 8.0;
  s.cross_width = rd / 5.0;
  s.reach = 0.35 * rd;
  const double gain = 0.3 * rd;
  const double mid = (rd - 1.0) / 2.0;
  const double ring = n_subjects == 1 ? 0.0 : 0.35 * rd;

  std::vector<double> px(n_subjects), py(n_subjects);
  for (std::size_t j = 0; j < n_subjects; ++j) {
    const double theta = 1.25 * std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_subjects);
    px[j] = mid + ring * std::cos(theta);
    py[j] = mid + ring * std::sin(theta);
  }

  s.blobs.resize(n_subjects);
  for (std::size_t j = 0; j < n_subjects; ++j) {
    auto& b = s.blobs[j];
    switch (kind) {
      case ScenarioKind::aligned:
        b = {px[j], py[j], px[j], py[j], gain, gain, 1.0};
        break;
      case ScenarioKind::neglect:
        b = {mid, mid, mid, mid, gain, gain, 1.0};
        break;
      case ScenarioKind::interference: {
        // Subject 0's cross map sits most of the way toward subject 1's blob;
        // only that map responds to the latent.
        b = {px[j], py[j], px[j], py[j], 0.0, 0.0, 1.0};
        if (j == 0 && n_subjects > 1) {
          b.cross_x = px[0] + 0.6 * (px[1] - px[0]);
          b.cross_y = py[0] + 0.6 * (py[1] - py[0]);
          b.cross_gain = gain;
        }
        break;
      }
      case ScenarioKind::custom:
        break;
    }
  }
  s.validate();
  return s;
}

SyntheticProducer::SyntheticProducer(ScenarioSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

void SyntheticProducer::check_latent(std::span<const double> z) const {
  require(z.size() == spec_.latent_dim, ErrorCode::shape_mismatch,
          "latent has dimension " + std::to_string(z.size()) + ", producer expects " +
              std::to_string(spec_.latent_dim));
  for (double x : z) require(std::isfinite(x), ErrorCode::non_finite, "latent entry is not finite");
}

SyntheticProducer::Centers SyntheticProducer::centers(std::span<const double> z) const {
  const std::size_t n = spec_.n_subjects;
  Centers c;
  for (auto* v : {&c.self_x, &c.self_y, &c.cross_x, &c.cross_y, &c.self_dx, &c.self_dy, &c.cross_dx, &c.cross_dy})
    v->resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& b = spec_.blobs[j];
    const double zx = z[2 * j];
    const double zy = z[2 * j + 1];
    const auto sx = displace(b.self_gain, spec_.reach, zx);
    const auto sy = displace(b.self_gain, spec_.reach, zy);
    const auto cx = displace(b.cross_gain, spec_.reach, zx);
    const auto cy = displace(b.cross_gain, spec_.reach, zy);
    c.self_x[j] = b.self_x + sx.value;
    c.self_y[j] = b.self_y + sy.value;
    c.cross_x[j] = b.cross_x + cx.value;
    c.cross_y[j] = b.cross_y + cy.value;
    c.self_dx[j] = sx.slope;
    c.self_dy[j] = sy.slope;
    c.cross_dx[j] = cx.slope;
    c.cross_dy[j] = cy.slope;
  }
  return c;
}

AttentionBundle SyntheticProducer::evaluate(std::span<const double> z) const {
  check_latent(z);
  const std::size_t r = spec_.r;
  const std::size_t n = spec_.n_subjects;
  const std::size_t cells = r * r;
  const Centers c = centers(z);
  const double ws2 = 2.0 * spec_.self_width * spec_.self_width;
  const double wc2 = 2.0 * spec_.cross_width * spec_.cross_width;

  AttentionBundle out;
  out.cross.r = r;
  out.self.r = r;
  std::vector<std::vector<double>> scores(n, std::vector<double>(cells));
  std::vector<double> background(cells, spec_.background);
  for (std::size_t j = 0; j < n; ++j) {
    Grid map(r);
    for (std::size_t k = 0; k < r; ++k) {
      for (std::size_t l = 0; l < r; ++l) {
        const double x = static_cast<double>(l);
        const double y = static_cast<double>(k);
        const double ds = (x - c.self_x[j]) * (x - c.self_x[j]) + (y - c.self_y[j]) * (y - c.self_y[j]);
        const double dc = (x - c.cross_x[j]) * (x - c.cross_x[j]) + (y - c.cross_y[j]) * (y - c.cross_y[j]);
        const std::size_t cell = k * r + l;
        scores[j][cell] = spec_.blobs[j].amplitude * std::exp(-ds / ws2);
        map[cell] = std::exp(-std::pow(dc / wc2, spec_.cross_order));
        background[cell] *= 1.0 - scores[j][cell];
      }
    }
    out.cross.maps.push_back(std::move(map));
  }
  std::vector<double> foreground(cells, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t cell = 0; cell < cells; ++cell) foreground[cell] += scores[j][cell];
  const double coupling = spec_.foreground_coupling;
  out.self.values.assign(cells * cells, 0.0);
  for (std::size_t a = 0; a < cells; ++a) {
    for (std::size_t b = 0; b < cells; ++b) {
      double acc = background[a] * background[b] + coupling * foreground[a] * foreground[b];
      for (std::size_t j = 0; j < n; ++j) acc += scores[j][a] * scores[j][b];
      out.self.values[a * cells + b] = acc;
    }
  }
  return out;
}

std::vector<double> SyntheticProducer::vjp(std::span<const double> z, const BundleCotangent& cotangent) const {
  check_latent(z);
  const std::size_t r = spec_.r;
  const std::size_t n = spec_.n_subjects;
  const std::size_t cells = r * r;
  require(cotangent.cross.size() == n && cotangent.self.size() == cells * cells, ErrorCode::shape_mismatch,
          "cotangent shape does not match the producer output");
  const Centers c = centers(z);
  const double ws2 = 2.0 * spec_.self_width * spec_.self_width;
  const double wc2 = 2.0 * spec_.cross_width * spec_.cross_width;
  const double p = spec_.cross_order;

  std::vector<std::vector<double>> scores(n, std::vector<double>(cells));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const double x = static_cast<double>(cell % r);
      const double y = static_cast<double>(cell / r);
      const double ds = (x - c.self_x[j]) * (x - c.self_x[j]) + (y - c.self_y[j]) * (y - c.self_y[j]);
      scores[j][cell] = spec_.blobs[j].amplitude * std::exp(-ds / ws2);
    }
  std::vector<double> background(cells, spec_.background);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t cell = 0; cell < cells; ++cell) background[cell] *= 1.0 - scores[j][cell];

  std::vector<double> foreground(cells, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t cell = 0; cell < cells; ++cell) foreground[cell] += scores[j][cell];

  // T = Σ sⱼsⱼᵀ + c·ffᵀ + bbᵀ  ⇒  ∂/∂sⱼ = (G + Gᵀ)(sⱼ + c·f), ∂/∂b = (G + Gᵀ) b
  auto sym_apply = [&](const std::vector<double>& vec) {
    std::vector<double> out(cells, 0.0);
    for (std::size_t a = 0; a < cells; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < cells; ++b)
        acc += (cotangent.self[a * cells + b] + cotangent.self[b * cells + a]) * vec[b];
      out[a] = acc;
    }
    return out;
  };
  const std::vector<double> g_background = sym_apply(background);
  std::vector<double> g_foreground = sym_apply(foreground);
  for (double& g : g_foreground) g *= spec_.foreground_coupling;

  std::vector<double> grad(spec_.latent_dim, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> g_score = sym_apply(scores[j]);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      double others = spec_.background;
      for (std::size_t k = 0; k < n; ++k)
        if (k != j) others *= 1.0 - scores[k][cell];
      g_score[cell] += g_foreground[cell] - g_background[cell] * others;
    }

    double g_sx = 0.0, g_sy = 0.0, g_cx = 0.0, g_cy = 0.0;
    const Grid& g_map = cotangent.cross[j];
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const double x = static_cast<double>(cell % r);
      const double y = static_cast<double>(cell / r);
      // ∂s/∂center = s·(x − center)/w²
      const double s_term = g_score[cell] * scores[j][cell] * 2.0 / ws2;
      g_sx += s_term * (x - c.self_x[j]);
      g_sy += s_term * (y - c.self_y[j]);
      if (g_map[cell] != 0.0) {
        const double dx = x - c.cross_x[j];
        const double dy = y - c.cross_y[j];
        const double q = (dx * dx + dy * dy) / wc2;
        if (q > 0.0) {
          const double value = std::exp(-std::pow(q, p));
          // ∂/∂center of exp(−qᵖ) = exp(−qᵖ)·p·qᵖ⁻¹·2(x − center)/(2w²)
          const double c_term = g_map[cell] * value * p * std::pow(q, p - 1.0) * 2.0 / wc2;
          g_cx += c_term * dx;
          g_cy += c_term * dy;
        }
      }
    }
    grad[2 * j] += g_sx * c.self_dx[j] + g_cx * c.cross_dx[j];
    grad[2 * j + 1] += g_sy * c.self_dy[j] + g_cy * c.cross_dy[j];
  }
  return grad;
}

std::unique_ptr<AttentionProducer> make_producer(const ScenarioSpec& spec) {
  return std::make_unique<SyntheticProducer>(spec);
}

}  // namespace coconolab
