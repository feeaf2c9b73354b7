#pragma once

// Attention-map preprocessing: cross-attention aggregation and smoothing,
// principal-component saliency of the self-attention tensor, sigmoid
// softening, Otsu binarization and connected-component segmentation.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coconolab/grid.hpp"

namespace coconolab {

// n cross-attention maps of resolution r, one per subject token.
struct CrossAttentionStack {
  std::size_t r = 0;
  std::vector<Grid> maps;
  std::vector<std::string> token_labels;

  std::size_t n() const noexcept { return maps.size(); }
  void validate() const;  // shape, finiteness, [0,1] range
};

// r²×r² row-major; row c is how cell c attends over all cells.
struct SelfAttentionTensor {
  std::size_t r = 0;
  std::vector<double> values;

  std::size_t cells() const noexcept { return r * r; }
  double operator()(std::size_t row, std::size_t col) const { return values[row * cells() + col]; }
  void validate() const;  // shape, finiteness, nonnegativity
};

enum class SaliencyKind { principal, principal_inverted, softened };

struct SaliencyMap {
  Grid map;
  SaliencyKind kind = SaliencyKind::principal;
};

struct SegmentSet {
  std::vector<Mask> masks;
  std::vector<Grid> values;
  std::vector<double> masses;
  std::size_t components_found = 0;  // u, before truncation/padding

  std::size_t n() const noexcept { return masks.size(); }
};

struct SmoothingConfig {
  std::size_t kernel_size = 3;
  double sigma = 0.5;

  void validate() const;
};

// One layer's attention: heads × cells × tokens, contiguous in that order.
struct RawAttentionLayer {
  std::size_t heads = 0;
  std::size_t cells = 0;
  std::size_t tokens = 0;
  std::vector<double> values;

  double at(std::size_t h, std::size_t c, std::size_t t) const {
    return values[(h * cells + c) * tokens + t];
  }
};

/// Averages the selected token maps over every layer and head. Each head's map
/// is scaled to max 1 before averaging and the mean is scaled to max 1 again;
/// all-zero maps stay zero. Token 0 is the start token and cannot be selected.
CrossAttentionStack aggregate_cross_attention(std::span<const RawAttentionLayer> layers,
                                              std::span<const std::size_t> subject_token_indices,
                                              std::vector<std::string> token_labels = {});

/// Normalized 2-D Gaussian convolution with reflect (edge-excluded) padding.
Grid gaussian_blur(const Grid& map, const SmoothingConfig& cfg);
/// Adjoint of gaussian_blur.
Grid gaussian_blur_vjp(const Grid& cotangent, const SmoothingConfig& cfg);

/// Blurs every slice, then rescales each slice to max 1.
CrossAttentionStack smooth_cross_attention(const CrossAttentionStack& stack, const SmoothingConfig& cfg);
/// Pulls cotangents on the smoothed stack back to the input stack. The argmax
/// used for rescaling is treated as locally constant.
std::vector<Grid> smooth_cross_attention_vjp(const CrossAttentionStack& input,
                                             const SmoothingConfig& cfg,
                                             std::span<const Grid> cotangent);

struct PcaOptions {
  double tolerance = 1e-9;
  std::size_t max_iterations = 1000;
};

// Everything the backward pass through the PCA projection needs.
struct PrincipalProjection {
  std::size_t cells = 0;
  std::vector<double> centered;   // cells×cells, column-mean-centered tensor
  std::vector<double> direction;  // unit leading eigenvector of centeredᵀ·centered
  double eigenvalue = 0.0;
  std::vector<double> scores;     // centered · direction
  std::size_t argmin = 0;
  std::size_t argmax = 0;
  std::size_t iterations = 0;
};

struct PrincipalMaps {
  SaliencyMap principal;
  SaliencyMap inverted;
  PrincipalProjection projection;

  const SaliencyMap& get(SaliencyKind kind) const {
    return kind == SaliencyKind::principal_inverted ? inverted : principal;
  }
};

/// First principal component scores of the self-attention tensor, min-max
/// normalized, together with the inverted map (1 − map). The eigenvector sign
/// is fixed so its largest-magnitude entry is positive (first index on ties).
PrincipalMaps principal_self_map(const SelfAttentionTensor& self_attn, const PcaOptions& opts = {});

/// Cotangent on the self tensor given a cotangent on one of the two maps.
/// Eigenvector motion is included; argmin/argmax and the sign choice are held.
std::vector<double> principal_self_map_vjp(const PrincipalMaps& maps, SaliencyKind which,
                                           const Grid& map_cotangent);

/// Elementwise sigmoid(alpha·(x − beta)).
SaliencyMap soften(const SaliencyMap& map, double alpha, double beta);
Grid soften_vjp(const SaliencyMap& input, double alpha, double beta, const Grid& cotangent);

inline constexpr std::size_t kOtsuBins = 256;

/// Histogram bin of a value in [0,1] for the 256-bin Otsu histogram.
std::size_t otsu_bin(double value) noexcept;

/// Otsu threshold over 256 uniform bins on [0,1]. Cells with value ≥ the
/// returned threshold form the foreground. Throws degenerate_input when every
/// value falls into the same bin.
double otsu_threshold(const Grid& map);
inline double otsu_threshold(const SaliencyMap& map) { return otsu_threshold(map.map); }

/// Binarizes at threshold, labels 4-connected components by BFS, keeps the n
/// heaviest by softened mass and pads with empty segments up to n.
SegmentSet extract_segments(const SaliencyMap& softened, double threshold, std::size_t n);

}  // namespace coconolab
