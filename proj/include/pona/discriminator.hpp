#ifndef PONA_DISCRIMINATOR_HPP
#define PONA_DISCRIMINATOR_HPP

#include "pona/layers.hpp"
#include "pona/pose_encoding.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pona {

struct DiscriminatorConfig {
  Index num_residual_blocks = 3;
  Index base_channels = 128;
  double leaky_slope = 0.2;
  NormKind norm = NormKind::instance;
  Index attention_reduction = 8;
  Index attention_after = 2;  // self-attention follows this residual block (1-based)

  void validate() const {
    if (num_residual_blocks < 1) throw ValidationError("discriminator.num_residual_blocks: must be >= 1");
    if (base_channels < 1) throw ValidationError("discriminator.base_channels: must be >= 1");
    if (!(leaky_slope > 0 && leaky_slope < 1)) throw ValidationError("discriminator.leaky_slope: must lie in (0, 1)");
    if (attention_reduction < 1) throw ValidationError("discriminator.attention_reduction: must be >= 1");
    if (attention_after < 0 || attention_after > num_residual_blocks)
      throw ValidationError("discriminator.attention_after: must lie in [0, num_residual_blocks]");
  }
};

/// conv-norm-leaky, conv-norm, skip add, leaky.
template <typename Scalar>
struct ResidualBlock {
  ConvUnit<Scalar> first;
  Conv2d<Scalar> second;
  Norm<Scalar> second_norm;
  double slope = 0.2;

  static ResidualBlock create(ParameterStore<Scalar>& store, const std::string& name, Index channels, NormKind nk,
                              double slope) {
    ResidualBlock r;
    r.first = ConvUnit<Scalar>::create(store, name + ".a", channels, channels, kSame3x3, nk, Activation::leaky_relu,
                                       slope);
    r.second = Conv2d<Scalar>::create(store, name + ".b.conv", channels, channels, kSame3x3);
    r.second_norm = Norm<Scalar>::create(store, name + ".b.norm", channels, nk);
    r.slope = slope;
    return r;
  }

  Var<Scalar> operator()(Var<Scalar> x) const { return leaky_relu(add(x, second_norm(second(first(x)))), slope); }
};

/// Consistency scorer over a depth-concatenated pair: stem, one downsampling stage, residual
/// blocks with one self-attention unit, global pooling and a logistic output in (0, 1).
template <typename Scalar>
class Discriminator {
 public:
  using Allocation = typename ParameterStore<Scalar>::Allocation;

  Discriminator(const DiscriminatorConfig& cfg, Index in_channels, std::uint64_t seed,
                Allocation allocation = Allocation::full)
      : cfg_((cfg.validate(), cfg)), in_channels_(in_channels), store_(seed, allocation) {
    const Index b = cfg.base_channels;
    const Index wide = 2 * b;
    const auto leaky = Activation::leaky_relu;
    stem_ = ConvUnit<Scalar>::create(store_, "stem", in_channels, b, kSame3x3, cfg.norm, leaky, cfg.leaky_slope);
    down_ = ConvUnit<Scalar>::create(store_, "down", b, wide, kDown3x3, cfg.norm, leaky, cfg.leaky_slope);
    for (Index i = 0; i < cfg.num_residual_blocks; ++i)
      blocks_.push_back(
          ResidualBlock<Scalar>::create(store_, "res" + std::to_string(i), wide, cfg.norm, cfg.leaky_slope));
    if (cfg.attention_after > 0)
      attention_ = AttentionParams<Scalar>::create(store_, "attention", wide, wide, cfg.attention_reduction, kInitStd);
    head_ = Conv2d<Scalar>::create(store_, "head", wide, 1, kPointwise);
  }

  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  ParameterStore<Scalar>& store() { return store_; }
  const ParameterStore<Scalar>& store() const { return store_; }
  Index in_channels() const { return in_channels_; }

  /// (B, in_channels, H, W) -> (B, 1, 1, 1) scores.
  Var<Scalar> operator()(Var<Scalar> input) const {
    if (input->shape().channels != in_channels_)
      throw ShapeError("discriminator expects " + std::to_string(in_channels_) + " channels, got " +
                       input->shape().str());
    Var<Scalar> x = down_(stem_(input));
    for (Index i = 0; i < static_cast<Index>(blocks_.size()); ++i) {
      x = blocks_[static_cast<std::size_t>(i)](x);
      if (attention_ && i + 1 == cfg_.attention_after) x = self_attention(x, *attention_);
    }
    return sigmoid(head_(global_mean_pool(x)));
  }

 private:
  DiscriminatorConfig cfg_;
  Index in_channels_;
  ParameterStore<Scalar> store_;
  ConvUnit<Scalar> stem_;
  ConvUnit<Scalar> down_;
  std::vector<ResidualBlock<Scalar>> blocks_;
  std::optional<AttentionParams<Scalar>> attention_;
  Conv2d<Scalar> head_;
};

inline constexpr Index kAppearanceInputChannels = 6;
inline constexpr Index kPoseInputChannels = 3 + kNumJoints;

template <typename Scalar>
void require_same_image_size(Var<Scalar> a, Var<Scalar> b, const char* what) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  if (sa.batch != sb.batch || sa.height != sb.height || sa.width != sb.width)
    throw ShapeError(std::string(what) + ": " + sa.str() + " vs " + sb.str());
}

/// S^A: does `candidate` show the same person as `condition_image`?
template <typename Scalar>
Var<Scalar> score_appearance(const Discriminator<Scalar>& d, Var<Scalar> condition_image, Var<Scalar> candidate) {
  require_same_image_size(condition_image, candidate, "appearance discriminator inputs differ in size");
  return d(concat(condition_image, candidate));
}

/// S^P: does `candidate` align with `target_pose`?
template <typename Scalar>
Var<Scalar> score_pose(const Discriminator<Scalar>& d, Var<Scalar> candidate, Var<Scalar> target_pose) {
  require_same_image_size(candidate, target_pose, "pose discriminator inputs differ in size");
  return d(concat(candidate, target_pose));
}

}  // namespace pona

#endif  // PONA_DISCRIMINATOR_HPP
