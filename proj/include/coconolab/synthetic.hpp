#pragma once

// Differentiable toy attention producers reproducing attention neglect and
// interference without a diffusion model.
//
// Subject j owns latent coordinates (2j, 2j+1), which displace its self blob and
// its cross map by reach·tanh(gain·z/reach) cells along (column, row). The self
// tensor is Σⱼ sⱼsⱼᵀ + c·ffᵀ + bbᵀ where sⱼ are Gaussian blob scores,
// f = Σⱼ sⱼ is the shared foreground response with coupling c, and
// b = background·Πⱼ(1 − sⱼ) is the complementary background response, so the
// leading principal component separates foreground from background. Cross maps
// are generalized Gaussians exp(−qᵖ), q = d²/(2w²), with peak 1.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coconolab/producer.hpp"

namespace coconolab {

enum class ScenarioKind { neglect, interference, aligned, custom };

const char* scenario_kind_name(ScenarioKind kind) noexcept;
ScenarioKind parse_scenario_kind(const std::string& name);

// Coordinates are in cells: x is the column, y the row, cell centers at integers.
struct BlobSpec {
  double self_x = 0.0;
  double self_y = 0.0;
  double cross_x = 0.0;
  double cross_y = 0.0;
  double self_gain = 0.0;
  double cross_gain = 0.0;
  double amplitude = 1.0;  // self blob peak, in (0, 1]
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::custom;
  std::size_t n_subjects = 0;
  std::size_t r = 8;
  std::size_t latent_dim = 0;
  std::vector<BlobSpec> blobs;
  double self_width = 1.0;
  double cross_width = 1.6;
  double cross_order = 2.0;   // 1 is an ordinary Gaussian; 2 is flat-topped
  double background = 0.6;
  double foreground_coupling = 0.5;  // keeps fore/background the leading mode for many subjects
  double reach = 3.0;         // bound on latent-driven displacement, cells

  void validate() const;
};

/// Built-in scenario at resolution r with n subjects and latent dimension D
/// (D = 2n when zero).
ScenarioSpec make_scenario(ScenarioKind kind, std::size_t n_subjects, std::size_t r, std::size_t latent_dim = 0);

class SyntheticProducer final : public AttentionProducer {
 public:
  explicit SyntheticProducer(ScenarioSpec spec);

  const ScenarioSpec& spec() const noexcept { return spec_; }
  std::size_t dimension() const override { return spec_.latent_dim; }
  AttentionBundle evaluate(std::span<const double> z) const override;
  std::vector<double> vjp(std::span<const double> z, const BundleCotangent& cotangent) const override;

 private:
  struct Centers {
    std::vector<double> self_x, self_y, cross_x, cross_y;
    // d(center)/dz for the subject's own coordinates
    std::vector<double> self_dx, self_dy, cross_dx, cross_dy;
  };
  Centers centers(std::span<const double> z) const;
  void check_latent(std::span<const double> z) const;

  ScenarioSpec spec_;
};

std::unique_ptr<AttentionProducer> make_producer(const ScenarioSpec& spec);

}  // namespace coconolab
