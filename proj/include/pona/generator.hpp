#ifndef PONA_GENERATOR_HPP
#define PONA_GENERATOR_HPP

#include "pona/layers.hpp"
#include "pona/pose_encoding.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pona {

/// Where the pose/image concatenation (plus self-attention) sits inside the pose pathway.
enum class FusionPlace { head, middle, tail, none };

/// Which pose code feeds the cross-modal attention map: the block's updated code or its input.
enum class AttentionSource { updated, previous };

struct GeneratorConfig {
  Index num_blocks = 3;
  Index base_channels = 64;
  NormKind norm = NormKind::batch;
  FusionPlace fusion = FusionPlace::head;
  bool use_self_attention = true;
  bool use_cross_modal = true;
  Index attention_reduction = 8;
  AttentionSource attention_source = AttentionSource::updated;
  ImageSize image_size{128, 64};

  Index code_channels() const { return 4 * base_channels; }
  ImageSize code_size() const { return {image_size.height / 4, image_size.width / 4}; }

  void validate() const {
    if (num_blocks < 1) throw ValidationError("generator.num_blocks: must be >= 1");
    if (base_channels < 1) throw ValidationError("generator.base_channels: must be >= 1");
    if (attention_reduction < 1) throw ValidationError("generator.attention_reduction: must be >= 1");
    if (image_size.height < 4 || image_size.height % 4 != 0)
      throw ValidationError("generator.image_height: must be a positive multiple of 4");
    if (image_size.width < 4 || image_size.width % 4 != 0)
      throw ValidationError("generator.image_width: must be a positive multiple of 4");
  }
};

/// One cascaded cross-modal block. The pose pathway (four conv layers, with the fusion step
/// placed per FusionPlace) refreshes the pose code; the image pathway (four conv layers) is
/// then re-arranged by non-local attention whose keys and queries come from the pose code.
template <typename Scalar>
class PoNABlock {
 public:
  struct Output {
    Var<Scalar> image_code;
    Var<Scalar> pose_code;
    Var<Scalar> convolved_image;          // image pathway output before attention
    Var<Scalar> attention = nullptr;      // cross-modal weights, null when disabled
  };

  PoNABlock(ParameterStore<Scalar>& store, const std::string& prefix, const GeneratorConfig& cfg) : cfg_(cfg) {
    const Index c = cfg.code_channels();
    const NormKind nk = cfg.norm;
    const bool fuses = cfg.fusion != FusionPlace::none;
    if (fuses && cfg.use_self_attention)
      fusion_attention_ = AttentionParams<Scalar>::create(store, prefix + ".fusion_attention", 2 * c, 2 * c,
                                                          cfg.attention_reduction, kInitStd);
    // The layer right after the fusion step halves 2C back to C.
    for (int i = 0; i < 4; ++i) {
      const bool halving = (cfg.fusion == FusionPlace::head && i == 0) || (cfg.fusion == FusionPlace::middle && i == 2);
      pose_path_.push_back(ConvUnit<Scalar>::create(store, prefix + ".pose" + std::to_string(i), halving ? 2 * c : c, c,
                                                    kSame3x3, nk));
    }
    if (cfg.fusion == FusionPlace::tail)
      tail_projection_ = ConvUnit<Scalar>::create(store, prefix + ".pose_tail", 2 * c, c, kPointwise, nk);
    for (int i = 0; i < 4; ++i)
      image_path_.push_back(ConvUnit<Scalar>::create(store, prefix + ".image" + std::to_string(i), c, c, kSame3x3, nk));
    if (cfg.use_cross_modal)
      cross_attention_ =
          AttentionParams<Scalar>::create(store, prefix + ".cross_attention", c, c, cfg.attention_reduction, kInitStd);
  }

  Output operator()(Var<Scalar> image_code, Var<Scalar> pose_code) const {
    if (!(image_code->shape() == pose_code->shape()))
      throw ShapeError("PoNA block: image code " + image_code->shape().str() + " and pose code " +
                       pose_code->shape().str() + " are not aligned");
    Var<Scalar> p = pose_code;
    switch (cfg_.fusion) {
      case FusionPlace::head:
        p = fuse(p, image_code);
        for (const auto& layer : pose_path_) p = layer(p);
        break;
      case FusionPlace::middle:
        p = pose_path_[1](pose_path_[0](p));
        p = fuse(p, image_code);
        p = pose_path_[3](pose_path_[2](p));
        break;
      case FusionPlace::tail:
        for (const auto& layer : pose_path_) p = layer(p);
        p = (*tail_projection_)(fuse(p, image_code));
        break;
      case FusionPlace::none:
        for (const auto& layer : pose_path_) p = layer(p);
        break;
    }

    Var<Scalar> convolved = image_code;
    for (const auto& layer : image_path_) convolved = layer(convolved);

    Output out{convolved, p, convolved};
    if (cross_attention_) {
      Var<Scalar> guide = cfg_.attention_source == AttentionSource::updated ? p : pose_code;
      out.attention = attention_map(guide, *cross_attention_);
      out.image_code = apply_attention(convolved, out.attention, *cross_attention_);
    }
    return out;
  }

  const std::optional<AttentionParams<Scalar>>& cross_attention() const { return cross_attention_; }
  const std::optional<AttentionParams<Scalar>>& fusion_attention() const { return fusion_attention_; }

 private:
  Var<Scalar> fuse(Var<Scalar> pose, Var<Scalar> image) const {
    Var<Scalar> fused = concat(pose, image);
    return fusion_attention_ ? self_attention(fused, *fusion_attention_) : fused;
  }

  GeneratorConfig cfg_;
  std::optional<AttentionParams<Scalar>> fusion_attention_;
  std::vector<ConvUnit<Scalar>> pose_path_;
  std::optional<ConvUnit<Scalar>> tail_projection_;
  std::vector<ConvUnit<Scalar>> image_path_;
  std::optional<AttentionParams<Scalar>> cross_attention_;
};

/// Stem plus two stride-2 convolutions: (in, H, W) -> (4*base, H/4, W/4).
template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore<Scalar>& store, const std::string& prefix, Index in_channels, Index base, NormKind nk) {
    layers_.push_back(ConvUnit<Scalar>::create(store, prefix + ".stem", in_channels, base, kSame3x3, nk));
    layers_.push_back(ConvUnit<Scalar>::create(store, prefix + ".down1", base, 2 * base, kDown3x3, nk));
    layers_.push_back(ConvUnit<Scalar>::create(store, prefix + ".down2", 2 * base, 4 * base, kDown3x3, nk));
  }

  Var<Scalar> operator()(Var<Scalar> x) const {
    for (const auto& layer : layers_) x = layer(x);
    return x;
  }

 private:
  std::vector<ConvUnit<Scalar>> layers_;
};

template <typename Scalar>
class Generator {
 public:
  using Allocation = typename ParameterStore<Scalar>::Allocation;

  struct Trace {
    std::vector<typename PoNABlock<Scalar>::Output> blocks;
    Var<Scalar> image_code0 = nullptr;
    Var<Scalar> pose_code0 = nullptr;
  };

  Generator(const GeneratorConfig& cfg, std::uint64_t seed, Allocation allocation = Allocation::full)
      : cfg_((cfg.validate(), cfg)), store_(seed, allocation) {
    const Index base = cfg.base_channels;
    appearance_encoder_ = Encoder<Scalar>(store_, "appearance_encoder", 3, base, cfg.norm);
    pose_encoder_ = Encoder<Scalar>(store_, "pose_encoder", 2 * kNumJoints, base, cfg.norm);
    for (Index t = 0; t < cfg.num_blocks; ++t) {
      const Index before = store_.parameter_count();
      blocks_.emplace_back(store_, "block" + std::to_string(t), cfg);
      block_sizes_.push_back(store_.parameter_count() - before);
    }
    decoder_.push_back(ConvUnit<Scalar>::create(store_, "decoder.up1", 4 * base, 2 * base, kSame3x3, cfg.norm));
    decoder_.push_back(ConvUnit<Scalar>::create(store_, "decoder.up2", 2 * base, base, kSame3x3, cfg.norm));
    output_ = Conv2d<Scalar>::create(store_, "decoder.output", base, 3, kSame3x3);
  }

  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  const GeneratorConfig& config() const { return cfg_; }
  ParameterStore<Scalar>& store() { return store_; }
  const ParameterStore<Scalar>& store() const { return store_; }
  const PoNABlock<Scalar>& block(Index t) const { return blocks_.at(static_cast<std::size_t>(t)); }
  Index block_parameter_count(Index t) const { return block_sizes_.at(static_cast<std::size_t>(t)); }

  Var<Scalar> encode_appearance(Var<Scalar> image) const {
    check_input(image, 3, "condition image");
    return appearance_encoder_(image);
  }

  Var<Scalar> encode_pose_pair(Var<Scalar> pose_pair) const {
    check_input(pose_pair, 2 * kNumJoints, "pose pair");
    return pose_encoder_(pose_pair);
  }

  /// Two nearest-neighbour x2 upsampling stages then a bounded 3-channel projection.
  Var<Scalar> decode(Var<Scalar> code) const {
    Var<Scalar> x = code;
    for (const auto& layer : decoder_) x = layer(upsample_nearest(x, 2));
    return tanh(output_(x));
  }

  Var<Scalar> forward(Var<Scalar> condition_image, Var<Scalar> pose_pair, Trace* trace = nullptr) const {
    if (condition_image->shape().batch != pose_pair->shape().batch)
      throw ShapeError("condition image and pose pair batch sizes differ");
    Var<Scalar> image_code = encode_appearance(condition_image);
    Var<Scalar> pose_code = encode_pose_pair(pose_pair);
    if (trace) {
      trace->image_code0 = image_code;
      trace->pose_code0 = pose_code;
    }
    for (const auto& block : blocks_) {
      auto out = block(image_code, pose_code);
      image_code = out.image_code;
      pose_code = out.pose_code;
      if (trace) trace->blocks.push_back(out);
    }
    return decode(image_code);
  }

  /// Inference on one triplet; runs in evaluation mode without recording gradients.
  Tensor<Scalar> generate(const Tensor<Scalar>& condition_image, const PoseHeatmap<Scalar>& condition_pose,
                          const PoseHeatmap<Scalar>& target_pose) {
    ModeGuard<Scalar> guard(store_, false);
    Tape<Scalar> tape(false);
    Var<Scalar> out = forward(tape.constant(condition_image),
                              tape.constant(concat_pose_pair(condition_pose, target_pose)));
    return out->value;
  }

 private:
  void check_input(Var<Scalar> x, Index channels, const char* what) const {
    const Shape& s = x->shape();
    if (s.channels != channels || s.height != cfg_.image_size.height || s.width != cfg_.image_size.width)
      throw ShapeError(std::string(what) + " has shape " + s.str() + ", expected " + std::to_string(channels) +
                       "x" + std::to_string(cfg_.image_size.height) + "x" + std::to_string(cfg_.image_size.width));
  }

  GeneratorConfig cfg_;
  ParameterStore<Scalar> store_;
  Encoder<Scalar> appearance_encoder_;
  Encoder<Scalar> pose_encoder_;
  std::vector<PoNABlock<Scalar>> blocks_;
  std::vector<Index> block_sizes_;
  std::vector<ConvUnit<Scalar>> decoder_;
  Conv2d<Scalar> output_;
};

}  // namespace pona

#endif  // PONA_GENERATOR_HPP
