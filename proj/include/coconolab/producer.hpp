#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coconolab/attention.hpp"

namespace coconolab {

// One evaluation of an attention producer.
struct AttentionBundle {
  CrossAttentionStack cross;
  SelfAttentionTensor self;

  void validate() const;
};

// Gradient of a scalar with respect to every bundle entry.
struct BundleCotangent {
  std::vector<Grid> cross;
  std::vector<double> self;

  static BundleCotangent zeros_like(const AttentionBundle& b);
};

// Maps a latent vector to attention tensors, standing in for one denoising
// step of a text-to-image model. Implementations must be deterministic in z.
class AttentionProducer {
 public:
  virtual ~AttentionProducer() = default;

  virtual std::size_t dimension() const = 0;
  virtual AttentionBundle evaluate(std::span<const double> z) const = 0;
  /// Gradient w.r.t. z of ⟨cotangent, evaluate(z)⟩.
  virtual std::vector<double> vjp(std::span<const double> z, const BundleCotangent& cotangent) const = 0;
  virtual bool differentiable() const { return true; }
};

// Serves a fixed bundle regardless of z; has no gradient.
class FixedBundleProducer final : public AttentionProducer {
 public:
  FixedBundleProducer(AttentionBundle bundle, std::size_t dim) : bundle_(std::move(bundle)), dim_(dim) {}

  std::size_t dimension() const override { return dim_; }
  AttentionBundle evaluate(std::span<const double> z) const override;
  std::vector<double> vjp(std::span<const double> z, const BundleCotangent& cotangent) const override;
  bool differentiable() const override { return false; }

 private:
  AttentionBundle bundle_;
  std::size_t dim_;
};

}  // namespace coconolab
