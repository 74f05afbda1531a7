#ifndef PONA_LOSSES_HPP
#define PONA_LOSSES_HPP

#include "pona/ops.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pona {

/// (adversarial, L1, perceptual) weights of the full objective.
struct LossWeights {
  double adversarial = 5.0;
  double l1 = 10.0;
  double perceptual = 10.0;

  static LossWeights market() { return {5.0, 10.0, 10.0}; }
  static LossWeights deep_fashion() { return {5.0, 1.0, 1.0}; }

  void validate() const {
    if (!(adversarial >= 0)) throw ValidationError("training.lambda_adversarial: must be nonnegative");
    if (!(l1 >= 0)) throw ValidationError("training.lambda_l1: must be nonnegative");
    if (!(perceptual >= 0)) throw ValidationError("training.lambda_perceptual: must be nonnegative");
  }
};

/// Fixed feature map source for the perceptual term. Implementations must be deterministic
/// and must not train; the returned tensor's channels are the feature maps.
template <typename Scalar>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string layer_tag() const = 0;
  virtual Var<Scalar> extract(Var<Scalar> image) const = 0;
};

template <typename Scalar>
class IdentityExtractor final : public FeatureExtractor<Scalar> {
 public:
  std::string layer_tag() const override { return "identity"; }
  Var<Scalar> extract(Var<Scalar> image) const override { return image; }
};

/// Two seeded 3x3 convolutions with ReLU, a stand-in for a pretrained early conv layer.
template <typename Scalar>
class RandomConvExtractor final : public FeatureExtractor<Scalar> {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0x5eed, Index channels = 8) {
    std::mt19937_64 rng(seed);
    auto init = [&rng](Index rows, Index cols) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(cols)));
      Matrix<Scalar> m(rows, cols);
      for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
      return m;
    };
    w1_ = init(channels, 9 * 3);
    b1_ = init(channels, 1) * Scalar(0.1);
    w2_ = init(channels, 9 * channels);
    b2_ = init(channels, 1) * Scalar(0.1);
  }

  std::string layer_tag() const override { return "random_conv1_2"; }

  Var<Scalar> extract(Var<Scalar> image) const override {
    Var<Scalar> h = relu(conv2d<Scalar>(image, w1_, &b1_, nullptr, nullptr, ConvGeometry{3, 1, 1}));
    return relu(conv2d<Scalar>(h, w2_, &b2_, nullptr, nullptr, ConvGeometry{3, 1, 1}));
  }

  const Matrix<Scalar>& first_weight() const { return w1_; }
  const Matrix<Scalar>& first_bias() const { return b1_; }
  const Matrix<Scalar>& second_weight() const { return w2_; }
  const Matrix<Scalar>& second_bias() const { return b2_; }

 private:
  Matrix<Scalar> w1_, b1_, w2_, b2_;
};

// Recorded loss terms.

template <typename Scalar>
Var<Scalar> l1_loss(Var<Scalar> generated, Var<Scalar> target) {
  return mean_abs_diff(generated, target);
}

template <typename Scalar>
Var<Scalar> perceptual_loss(Var<Scalar> generated, Var<Scalar> target, const FeatureExtractor<Scalar>& extractor) {
  return channel_l1_sum(extractor.extract(generated), extractor.extract(target));
}

/// Discriminator objective in sum-of-logs form:
/// -E[log S^A_real] - E[log S^P_real] - E[log(1 - S^A_fake)] - E[log(1 - S^P_fake)].
template <typename Scalar>
Var<Scalar> discriminator_loss(Var<Scalar> appearance_real, Var<Scalar> pose_real, Var<Scalar> appearance_fake,
                               Var<Scalar> pose_fake) {
  return weighted_sum<Scalar>({{mean_neg_log(appearance_real, false), 1.0},
                               {mean_neg_log(pose_real, false), 1.0},
                               {mean_neg_log(appearance_fake, true), 1.0},
                               {mean_neg_log(pose_fake, true), 1.0}});
}

/// Non-saturating generator term: -E[log S^A_fake] - E[log S^P_fake].
template <typename Scalar>
Var<Scalar> generator_adversarial_loss(Var<Scalar> appearance_fake, Var<Scalar> pose_fake) {
  return weighted_sum<Scalar>({{mean_neg_log(appearance_fake, false), 1.0}, {mean_neg_log(pose_fake, false), 1.0}});
}

template <typename Scalar>
Var<Scalar> full_loss(Var<Scalar> adversarial, Var<Scalar> l1, Var<Scalar> perceptual, const LossWeights& w) {
  return weighted_sum<Scalar>({{adversarial, w.adversarial}, {l1, w.l1}, {perceptual, w.perceptual}});
}

// Value-level forms.

template <typename Scalar>
double l1_loss(const Tensor<Scalar>& generated, const Tensor<Scalar>& target) {
  Tape<Scalar> tape(false);
  return double(l1_loss(tape.constant(generated), tape.constant(target))->value.data(0, 0));
}

template <typename Scalar>
double perceptual_loss(const Tensor<Scalar>& generated, const Tensor<Scalar>& target,
                       const FeatureExtractor<Scalar>& extractor) {
  Tape<Scalar> tape(false);
  return double(perceptual_loss(tape.constant(generated), tape.constant(target), extractor)->value.data(0, 0));
}

/// Per-sample (S^A, S^P) scores.
struct ScoreBatch {
  std::vector<double> appearance;
  std::vector<double> pose;
};

struct AdversarialLosses {
  double discriminator = 0;
  double generator = 0;
};

AdversarialLosses adversarial_losses(const ScoreBatch& real, const ScoreBatch& fake);

struct LossComponents {
  double adversarial = 0;
  double l1 = 0;
  double perceptual = 0;
};

inline double full_loss(const LossComponents& c, const LossWeights& w) {
  return w.adversarial * c.adversarial + w.l1 * c.l1 + w.perceptual * c.perceptual;
}

}  // namespace pona

#endif  // PONA_LOSSES_HPP
