#ifndef PONA_ATTENTION_HPP
#define PONA_ATTENTION_HPP

#include "pona/ops.hpp"

#include <algorithm>
#include <string>

namespace pona {

enum class CodeRole { pose, image, fusion };

/// A C x (h*w) feature array flowing between blocks.
template <typename Scalar>
struct FeatureCode {
  Matrix<Scalar> data;
  Index height = 0;
  Index width = 0;
  CodeRole role = CodeRole::image;

  Index channels() const { return data.rows(); }
  Index locations() const { return height * width; }

  Tensor<Scalar> tensor() const { return Tensor<Scalar>(Shape{1, data.rows(), height, width}, data); }
  static FeatureCode from(const Tensor<Scalar>& t, CodeRole role) {
    if (t.shape.batch != 1) throw ShapeError("feature code holds a single sample");
    return FeatureCode{t.data, t.shape.height, t.shape.width, role};
  }
};

/// Row-stochastic N x N map: row j is the distribution over source locations i used to
/// build output location j.
template <typename Scalar>
struct AttentionMap {
  Matrix<Scalar> data;
  Index size() const { return data.rows(); }
};

/// Key/query/value/output 1x1 projections and the residual gate of one attention unit.
/// Keys and queries are read from a guide code; values and outputs act on the attended code.
template <typename Scalar>
struct AttentionParams {
  Parameter<Scalar>* key = nullptr;     // (reduced, guide_channels)
  Parameter<Scalar>* query = nullptr;   // (reduced, guide_channels)
  Parameter<Scalar>* value = nullptr;   // (channels, channels)
  Parameter<Scalar>* output = nullptr;  // (channels, channels)
  Parameter<Scalar>* gamma = nullptr;   // 1 x 1, zero at init

  static AttentionParams create(ParameterStore<Scalar>& store, const std::string& prefix, Index guide_channels,
                                Index channels, Index reduction, double init_std) {
    if (reduction < 1) throw ValidationError(prefix + ": attention reduction ratio must be >= 1");
    const Index reduced = std::max<Index>(1, guide_channels / reduction);
    AttentionParams p;
    p.key = &store.gaussian(prefix + ".key", reduced, guide_channels, init_std);
    p.query = &store.gaussian(prefix + ".query", reduced, guide_channels, init_std);
    p.value = &store.gaussian(prefix + ".value", channels, channels, init_std);
    p.output = &store.gaussian(prefix + ".output", channels, channels, init_std);
    p.gamma = &store.constant(prefix + ".gamma", 1, 1, Scalar(0));
    return p;
  }
};

inline constexpr ConvGeometry kPointwise{1, 1, 0};

/// Attention weights from a guide code, in the tape's column layout (see attention_weights).
template <typename Scalar>
Var<Scalar> attention_map(Var<Scalar> guide, const AttentionParams<Scalar>& p) {
  Var<Scalar> keys = conv2d(guide, *p.key, kPointwise);
  Var<Scalar> queries = conv2d(guide, *p.query, kPointwise);
  return attention_weights(keys, queries);
}

/// gamma * W_t(attend(W_h x, weights)) + x.
template <typename Scalar>
Var<Scalar> apply_attention(Var<Scalar> code, Var<Scalar> weights, const AttentionParams<Scalar>& p) {
  Var<Scalar> values = conv2d(code, *p.value, kPointwise);
  Var<Scalar> mixed = attend(values, weights);
  Var<Scalar> projected = conv2d(mixed, *p.output, kPointwise);
  return add(gate(projected, *p.gamma), code);
}

template <typename Scalar>
Var<Scalar> self_attention(Var<Scalar> x, const AttentionParams<Scalar>& p) {
  return apply_attention(x, attention_map(x, p), p);
}

// Single-sample value-level entry points. They run the same recorded ops on a tape with
// gradients disabled.

namespace detail {

template <typename Scalar>
void require_finite(const FeatureCode<Scalar>& code, const char* what) {
  if (!code.data.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

}  // namespace detail

template <typename Scalar>
AttentionMap<Scalar> compute_attention_map(const FeatureCode<Scalar>& pose_code, const AttentionParams<Scalar>& p) {
  detail::require_finite(pose_code, "pose code");
  Tape<Scalar> tape(false);
  Var<Scalar> weights = attention_map(tape.constant(pose_code.tensor()), p);
  return AttentionMap<Scalar>{weights->value.data.transpose()};
}

template <typename Scalar>
FeatureCode<Scalar> apply_attention(const FeatureCode<Scalar>& image_code, const AttentionMap<Scalar>& map,
                                    const AttentionParams<Scalar>& p) {
  detail::require_finite(image_code, "image code");
  const Index n = image_code.locations();
  if (map.data.rows() != n || map.data.cols() != n)
    throw ShapeError("attention map is " + std::to_string(map.data.rows()) + "x" + std::to_string(map.data.cols()) +
                     " but the image code has " + std::to_string(n) + " locations");
  Tape<Scalar> tape(false);
  Var<Scalar> weights = tape.constant(Tensor<Scalar>(Shape{1, n, 1, n}, map.data.transpose()));
  Var<Scalar> out = apply_attention(tape.constant(image_code.tensor()), weights, p);
  return FeatureCode<Scalar>::from(out->value, CodeRole::image);
}

template <typename Scalar>
FeatureCode<Scalar> self_attention(const FeatureCode<Scalar>& fused, const AttentionParams<Scalar>& p) {
  detail::require_finite(fused, "fusion code");
  Tape<Scalar> tape(false);
  Var<Scalar> out = self_attention(tape.constant(fused.tensor()), p);
  return FeatureCode<Scalar>::from(out->value, CodeRole::fusion);
}

}  // namespace pona

#endif  // PONA_ATTENTION_HPP
