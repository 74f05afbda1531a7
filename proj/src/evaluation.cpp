#include "pona/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>

namespace pona {

namespace {

constexpr Index kPool = 4;

Eigen::VectorXd pooled_features(const ImageTensor& image) {
  const Index h = image.shape.height;
  const Index w = image.shape.width;
  if (h < kPool || w < kPool) throw ShapeError("projection classifier needs images of at least 4x4");
  Eigen::VectorXd f(3 * kPool * kPool);
  Index k = 0;
  for (Index c = 0; c < 3; ++c)
    for (Index by = 0; by < kPool; ++by)
      for (Index bx = 0; bx < kPool; ++bx) {
        const Index y0 = by * h / kPool, y1 = (by + 1) * h / kPool;
        const Index x0 = bx * w / kPool, x1 = (bx + 1) * w / kPool;
        double s = 0;
        for (Index y = y0; y < y1; ++y)
          for (Index x = x0; x < x1; ++x) s += image(0, c, y, x);
        f(k++) = s / double((y1 - y0) * (x1 - x0));
      }
  return f;
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

ProjectionClassifier::ProjectionClassifier(std::uint64_t seed, Index labels, double gain) {
  if (labels < 2) throw ValidationError("projection classifier needs at least 2 labels");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, gain);
  weights_.resize(labels, 3 * kPool * kPool);
  for (Index j = 0; j < weights_.cols(); ++j)
    for (Index i = 0; i < labels; ++i) weights_(i, j) = dist(rng);
}

Eigen::VectorXd ProjectionClassifier::classify(const ImageTensor& image) const {
  const Eigen::VectorXd logits = weights_ * pooled_features(image);
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

KeypointSet MarkerPoseEstimator::estimate(const ImageTensor& image) const {
  const RgbImage rgb = to_rgb(image);
  const auto& palette = joint_marker_palette();
  std::array<double, kNumJoints> sx{}, sy{};
  std::array<Index, kNumJoints> count{};
  for (Index y = 0; y < rgb.height; ++y)
    for (Index x = 0; x < rgb.width; ++x) {
      int best = tolerance_ + 1;
      Index best_joint = -1;
      for (Index j = 0; j < kNumJoints; ++j) {
        int d = 0;
        for (Index c = 0; c < 3; ++c)
          d = std::max(d, std::abs(int(rgb.at(y, x, c)) - int(palette[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)])));
        if (d < best) {
          best = d;
          best_joint = j;
        }
      }
      if (best_joint < 0) continue;
      const auto j = static_cast<std::size_t>(best_joint);
      sx[j] += double(x);
      sy[j] += double(y);
      ++count[j];
    }
  JointArray joints{};
  for (std::size_t j = 0; j < joints.size(); ++j)
    if (count[j] > 0) joints[j] = {sx[j] / double(count[j]), sy[j] / double(count[j]), true};
  return KeypointSet(joints, rgb.size());
}

std::unique_ptr<ClassifierBackend> make_classifier(const std::string& name) {
  if (name == "projection") return std::make_unique<ProjectionClassifier>();
  if (name == "uniform") return std::make_unique<UniformClassifier>();
  throw ValidationError("unknown classifier backend '" + name + "' (expected projection or uniform)");
}

std::unique_ptr<PoseEstimatorBackend> make_pose_estimator(const std::string& name) {
  if (name == "marker") return std::make_unique<MarkerPoseEstimator>();
  throw ValidationError("unknown pose estimator backend '" + name + "' (expected marker)");
}

std::string MetricRow::value_text() const {
  if (infinite) return "inf";
  if (!value) return "n/a";
  return fmt(*value, 4) + (stddev ? " +/- " + fmt(*stddev, 4) : "");
}

const MetricRow& MetricReport::row(const std::string& metric) const {
  for (const auto& r : rows)
    if (r.metric == metric) return r;
  throw std::out_of_range("no metric row " + metric);
}

std::string MetricReport::records() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& r : rows) {
    os << "metric=" << r.metric << " value=";
    if (r.infinite)
      os << "inf";
    else if (r.value)
      os << *r.value;
    else
      os << "n/a";
    if (r.stddev) os << " std=" << *r.stddev;
    os << " pairs=" << pairs;
    if (!r.note.empty()) os << " note=\"" << r.note << '"';
    os << '\n';
  }
  return os.str();
}

std::string MetricReport::table() const {
  std::string header = "|";
  std::string rule = "|";
  std::string values = "|";
  for (const auto& r : rows) {
    const std::string v = r.value_text();
    const std::size_t width = std::max(r.metric.size(), v.size()) + 2;
    auto pad = [&](const std::string& s) { return " " + s + std::string(width - s.size() - 1, ' ') + "|"; };
    header += pad(r.metric);
    rule += std::string(width, '-') + "|";
    values += pad(v);
  }
  return header + "\n" + rule + "\n" + values + "\n";
}

MetricReport evaluate_images(const std::vector<ImageTensor>& generated, const std::vector<ImageTensor>& targets,
                             const std::vector<std::optional<MaskImage>>& masks, const EvaluationBackends& backends) {
  if (generated.size() != targets.size()) throw ShapeError("generated and target image counts differ");
  if (!masks.empty() && masks.size() != targets.size()) throw ShapeError("need one mask entry per pair");
  if (generated.empty()) throw ValidationError("evaluation needs at least one pair");
  if (!backends.classifier || !backends.pose_estimator) throw ValidationError("evaluation backends are not set");
  const std::size_t n = generated.size();
  MetricReport report;
  report.pairs = static_cast<Index>(n);
  const Index splits = effective_splits(backends.is_splits, static_cast<Index>(n));
  const std::string split_note = "splits=" + std::to_string(splits);

  double ssim_sum = 0;
  for (std::size_t i = 0; i < n; ++i) ssim_sum += ssim(generated[i], targets[i]);

  const ScoreStats is = inception_score(generated, *backends.classifier, splits);

  bool have_masks = !masks.empty();
  for (const auto& m : masks) have_masks = have_masks && m.has_value();
  MetricRow mask_ssim_row{"mask-SSIM", std::nullopt, std::nullopt, false, "no masks"};
  MetricRow mask_is_row{"mask-IS", std::nullopt, std::nullopt, false, "no masks"};
  if (have_masks) {
    double sum = 0;
    std::vector<MaskImage> plain;
    for (std::size_t i = 0; i < n; ++i) {
      sum += mask_ssim(generated[i], targets[i], *masks[i]);
      plain.push_back(*masks[i]);
    }
    mask_ssim_row = {"mask-SSIM", sum / double(n), std::nullopt, false, ""};
    const ScoreStats mis = mask_is(generated, plain, *backends.classifier, splits);
    mask_is_row = {"mask-IS", mis.mean, mis.stddev, false, split_note};
  }

  double psnr_sum = 0;
  Index finite = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Psnr p = psnr(generated[i], targets[i]);
    if (!p.is_infinite()) {
      psnr_sum += p.decibels();
      ++finite;
    }
  }
  MetricRow psnr_row{"PSNR", std::nullopt, std::nullopt, finite == 0, ""};
  if (finite > 0) {
    psnr_row.value = psnr_sum / double(finite);
    if (finite < static_cast<Index>(n)) psnr_row.note = std::to_string(Index(n) - finite) + " identical pairs excluded";
  }

  PckhCount pooled;
  Index skipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const KeypointSet target_kps = backends.pose_estimator->estimate(targets[i]);
    const KeypointSet generated_kps = backends.pose_estimator->estimate(generated[i]);
    try {
      const PckhCount c = pckh_counts(generated_kps, target_kps);
      pooled.correct += c.correct;
      pooled.total += c.total;
    } catch (const ValidationError&) {
      ++skipped;
    }
  }
  MetricRow pckh_row{"PCKh", std::nullopt, std::nullopt, false, ""};
  if (pooled.total > 0) pckh_row.value = double(pooled.correct) / double(pooled.total);
  if (skipped > 0) pckh_row.note = std::to_string(skipped) + " pairs without a usable target head segment";

  report.rows = {{"SSIM", ssim_sum / double(n), std::nullopt, false, ""},
                 {"IS", is.mean, is.stddev, false, split_note},
                 mask_ssim_row,
                 mask_is_row,
                 psnr_row,
                 pckh_row};
  return report;
}

std::vector<std::optional<MaskImage>> target_masks(const std::vector<LoadedPair>& pairs) {
  std::vector<std::optional<MaskImage>> masks;
  for (const auto& p : pairs)
    masks.push_back(p.target_mask ? std::optional<MaskImage>(to_mask(*p.target_mask)) : std::nullopt);
  return masks;
}

MetricReport evaluate_real_data(const std::vector<LoadedPair>& pairs, const EvaluationBackends& backends) {
  std::vector<ImageTensor> targets;
  for (const auto& p : pairs) targets.push_back(to_tensor<double>(p.target));
  return evaluate_images(targets, targets, target_masks(pairs), backends);
}

}  // namespace pona
