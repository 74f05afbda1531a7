#ifndef PONA_METRICS_HPP
#define PONA_METRICS_HPP

// Image-quality and pose-alignment metrics. Images are 1 x 3 x H x W tensors with values in
// [-1, 1]; masks are H x W matrices with entries in {0, 1}.

#include "pona/pose_encoding.hpp"
#include "pona/tensor.hpp"

#include <string>
#include <vector>

namespace pona {

using ImageTensor = Tensor<double>;
using MaskImage = Eigen::MatrixXd;

inline constexpr Index kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Gaussian-windowed SSIM (11x11, sigma 1.5) on images mapped to [0, 1], averaged over all
/// valid window positions and channels.
double ssim(const ImageTensor& a, const ImageTensor& b);

/// Composites `image` over mid-gray (0) outside the mask.
ImageTensor apply_mask(const ImageTensor& image, const MaskImage& mask);

double mask_ssim(const ImageTensor& a, const ImageTensor& b, const MaskImage& mask);

/// PSNR in decibels over the [-1, 1] range (peak 2). Identical inputs give the infinite
/// sentinel, which never carries a numeric value.
class Psnr {
 public:
  static Psnr infinite() { return Psnr(0.0, true); }
  static Psnr finite(double db) { return Psnr(db, false); }

  bool is_infinite() const { return infinite_; }
  double decibels() const;  // throws for the infinite sentinel
  std::string str() const;

 private:
  Psnr(double db, bool inf) : db_(db), infinite_(inf) {}
  double db_;
  bool infinite_;
};

inline constexpr double kPsnrPeak = 2.0;

Psnr psnr(const ImageTensor& a, const ImageTensor& b);

/// Class-posterior source for the inception score.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::string name() const = 0;
  virtual Eigen::VectorXd classify(const ImageTensor& image) const = 0;
};

/// Keypoint detector used by PCKh.
class PoseEstimatorBackend {
 public:
  virtual ~PoseEstimatorBackend() = default;
  virtual std::string name() const = 0;
  virtual KeypointSet estimate(const ImageTensor& image) const = 0;
};

struct ScoreStats {
  double mean = 0;
  double stddev = 0;
};

inline constexpr Index kDefaultIsSplits = 10;

/// exp(E_x KL(p(y|x) || p(y))) per split, then mean and population std over splits.
ScoreStats inception_score_from_posteriors(const std::vector<Eigen::VectorXd>& posteriors,
                                           Index splits = kDefaultIsSplits);
ScoreStats inception_score(const std::vector<ImageTensor>& images, const ClassifierBackend& classifier,
                           Index splits = kDefaultIsSplits);
ScoreStats mask_is(const std::vector<ImageTensor>& images, const std::vector<MaskImage>& masks,
                   const ClassifierBackend& classifier, Index splits = kDefaultIsSplits);

struct PckhCount {
  Index correct = 0;
  Index total = 0;
};

/// Joints visible in the target count toward the total; a joint is correct when it is also
/// visible in the generated set and lies within half the target's nose-neck length.
PckhCount pckh_counts(const KeypointSet& generated, const KeypointSet& target);
double pckh(const KeypointSet& generated, const KeypointSet& target);

}  // namespace pona

#endif  // PONA_METRICS_HPP
