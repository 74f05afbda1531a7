#ifndef PONA_EVALUATION_HPP
#define PONA_EVALUATION_HPP

#include "pona/data_pipeline.hpp"
#include "pona/generator.hpp"
#include "pona/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pona {

/// Seeded random projection of 4x4 average-pooled colors to softmax posteriors.
class ProjectionClassifier final : public ClassifierBackend {
 public:
  explicit ProjectionClassifier(std::uint64_t seed = 0x1ab5, Index labels = 10, double gain = 4.0);
  std::string name() const override { return "projection"; }
  Eigen::VectorXd classify(const ImageTensor& image) const override;

 private:
  Eigen::MatrixXd weights_;  // labels x 48
};

/// The same uniform posterior for every image.
class UniformClassifier final : public ClassifierBackend {
 public:
  explicit UniformClassifier(Index labels = 10) : labels_(labels) {}
  std::string name() const override { return "uniform"; }
  Eigen::VectorXd classify(const ImageTensor&) const override {
    return Eigen::VectorXd::Constant(labels_, 1.0 / double(labels_));
  }

 private:
  Index labels_;
};

/// Locates the saturated joint markers drawn by the synthetic renderer: every pixel whose
/// nearest palette color lies within `tolerance` (per channel) votes for that joint, and the
/// joint sits at the centroid of its votes.
class MarkerPoseEstimator final : public PoseEstimatorBackend {
 public:
  explicit MarkerPoseEstimator(int tolerance = 40) : tolerance_(tolerance) {}
  std::string name() const override { return "marker"; }
  KeypointSet estimate(const ImageTensor& image) const override;

 private:
  int tolerance_;
};

std::unique_ptr<ClassifierBackend> make_classifier(const std::string& name);
std::unique_ptr<PoseEstimatorBackend> make_pose_estimator(const std::string& name);

struct EvaluationBackends {
  std::shared_ptr<const ClassifierBackend> classifier;
  std::shared_ptr<const PoseEstimatorBackend> pose_estimator;
  Index is_splits = kDefaultIsSplits;  // capped so every split holds kMinImagesPerSplit images
};

inline constexpr Index kMinImagesPerSplit = 4;

inline Index effective_splits(Index requested, Index images) {
  return std::max<Index>(1, std::min(requested, images / kMinImagesPerSplit));
}

struct MetricRow {
  std::string metric;
  std::optional<double> value;  // empty when not computable or infinite
  std::optional<double> stddev;
  bool infinite = false;
  std::string note;

  std::string value_text() const;
};

/// Rows in the order SSIM, IS, mask-SSIM, mask-IS, PSNR, PCKh.
struct MetricReport {
  std::vector<MetricRow> rows;
  Index pairs = 0;

  const MetricRow& row(const std::string& metric) const;
  std::string records() const;  // one `key=value` line per metric
  std::string table() const;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"SSIM", "IS", "mask-SSIM", "mask-IS", "PSNR", "PCKh"};
  return names;
}

/// `target_masks` may be empty or hold one optional mask per pair.
MetricReport evaluate_images(const std::vector<ImageTensor>& generated, const std::vector<ImageTensor>& targets,
                             const std::vector<std::optional<MaskImage>>& target_masks,
                             const EvaluationBackends& backends);

std::vector<std::optional<MaskImage>> target_masks(const std::vector<LoadedPair>& pairs);

/// Scores each target image against itself.
MetricReport evaluate_real_data(const std::vector<LoadedPair>& pairs, const EvaluationBackends& backends);

template <typename Scalar>
std::vector<ImageTensor> generate_all(Generator<Scalar>& generator, const std::vector<LoadedPair>& pairs,
                                      double sigma) {
  std::vector<ImageTensor> out;
  for (const auto& p : pairs) {
    const Tensor<Scalar> img = generator.generate(to_tensor<Scalar>(p.condition),
                                                  encode_pose<Scalar>(p.record.condition_keypoints, sigma),
                                                  encode_pose<Scalar>(p.record.target_keypoints, sigma));
    out.push_back(img.template cast<double>());
  }
  return out;
}

template <typename Scalar>
MetricReport evaluate_model(Generator<Scalar>& generator, const std::vector<LoadedPair>& pairs, double sigma,
                            const EvaluationBackends& backends) {
  std::vector<ImageTensor> targets;
  for (const auto& p : pairs) targets.push_back(to_tensor<double>(p.target));
  return evaluate_images(generate_all(generator, pairs, sigma), targets, target_masks(pairs), backends);
}

}  // namespace pona

#endif  // PONA_EVALUATION_HPP
