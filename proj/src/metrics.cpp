#include "pona/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pona {

namespace {

void require_image(const ImageTensor& t, const char* what) {
  if (t.shape.batch != 1 || t.shape.channels != 3)
    throw ShapeError(std::string(what) + " must be a 1x3xHxW image, got " + t.shape.str());
}

void require_same(const ImageTensor& a, const ImageTensor& b) {
  require_image(a, "first image");
  require_image(b, "second image");
  if (a.shape != b.shape) throw ShapeError("image shapes differ: " + a.shape.str() + " vs " + b.shape.str());
}

Eigen::VectorXd gaussian_window() {
  Eigen::VectorXd w(kSsimWindow);
  const double c = double(kSsimWindow - 1) / 2.0;
  for (Index i = 0; i < kSsimWindow; ++i) w(i) = std::exp(-(double(i) - c) * (double(i) - c) / (2 * kSsimSigma * kSsimSigma));
  return w / w.sum();
}

// Separable valid-mode filtering of an H x W plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& plane, const Eigen::VectorXd& w) {
  const Index k = w.size();
  const Index oh = plane.rows() - k + 1;
  const Index ow = plane.cols() - k + 1;
  Eigen::MatrixXd rows_done(plane.rows(), ow);
  for (Index x = 0; x < ow; ++x) rows_done.col(x) = plane.middleCols(x, k) * w;
  Eigen::MatrixXd out(oh, ow);
  for (Index y = 0; y < oh; ++y) out.row(y) = w.transpose() * rows_done.middleRows(y, k);
  return out;
}

Eigen::MatrixXd unit_plane(const ImageTensor& t, Index c) {
  Eigen::MatrixXd p(t.shape.height, t.shape.width);
  for (Index y = 0; y < t.shape.height; ++y)
    for (Index x = 0; x < t.shape.width; ++x) p(y, x) = (t(0, c, y, x) + 1.0) / 2.0;
  return p;
}

void validate_posterior(const Eigen::VectorXd& p, std::size_t index) {
  if (p.size() < 1 || !p.allFinite() || (p.array() < 0).any() || std::abs(p.sum() - 1.0) > 1e-5)
    throw ValidationError("classifier posterior " + std::to_string(index) + " is not a probability vector");
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require_same(a, b);
  if (a.shape.height < kSsimWindow || a.shape.width < kSsimWindow)
    throw ShapeError("SSIM needs images of at least " + std::to_string(kSsimWindow) + "x" +
                     std::to_string(kSsimWindow) + ", got " + a.shape.str());
  const Eigen::VectorXd w = gaussian_window();
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  double total = 0;
  Index count = 0;
  for (Index c = 0; c < 3; ++c) {
    const Eigen::MatrixXd x = unit_plane(a, c);
    const Eigen::MatrixXd y = unit_plane(b, c);
    const Eigen::ArrayXXd mx = filter_valid(x, w).array();
    const Eigen::ArrayXXd my = filter_valid(y, w).array();
    const Eigen::ArrayXXd sxx = filter_valid(x.cwiseProduct(x), w).array() - mx * mx;
    const Eigen::ArrayXXd syy = filter_valid(y.cwiseProduct(y), w).array() - my * my;
    const Eigen::ArrayXXd sxy = filter_valid(x.cwiseProduct(y), w).array() - mx * my;
    const Eigen::ArrayXXd map =
        ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    total += map.sum();
    count += map.size();
  }
  return total / double(count);
}

ImageTensor apply_mask(const ImageTensor& image, const MaskImage& mask) {
  require_image(image, "image");
  if (mask.rows() != image.shape.height || mask.cols() != image.shape.width)
    throw ShapeError("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                     " but the image is " + image.shape.str());
  ImageTensor out = image;
  for (Index y = 0; y < image.shape.height; ++y)
    for (Index x = 0; x < image.shape.width; ++x)
      if (mask(y, x) == 0)
        for (Index c = 0; c < 3; ++c) out(0, c, y, x) = 0.0;
  return out;
}

double mask_ssim(const ImageTensor& a, const ImageTensor& b, const MaskImage& mask) {
  return ssim(apply_mask(a, mask), apply_mask(b, mask));
}

double Psnr::decibels() const {
  if (infinite_) throw std::logic_error("PSNR of identical images is infinite");
  return db_;
}

std::string Psnr::str() const {
  if (infinite_) return "inf";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << db_;
  return os.str();
}

Psnr psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same(a, b);
  const double mse = (a.data - b.data).squaredNorm() / double(a.data.size());
  if (mse == 0) return Psnr::infinite();
  return Psnr::finite(10.0 * std::log10(kPsnrPeak * kPsnrPeak / mse));
}

ScoreStats inception_score_from_posteriors(const std::vector<Eigen::VectorXd>& posteriors, Index splits) {
  const Index n = static_cast<Index>(posteriors.size());
  if (splits < 1) throw ValidationError("inception score: splits must be >= 1");
  if (n < splits)
    throw ValidationError("inception score: " + std::to_string(n) + " images cannot fill " + std::to_string(splits) +
                          " splits");
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    validate_posterior(posteriors[i], i);
    if (posteriors[i].size() != posteriors[0].size())
      throw ShapeError("classifier posteriors have inconsistent label counts");
  }
  std::vector<double> scores;
  for (Index s = 0; s < splits; ++s) {
    const Index begin = s * n / splits;
    const Index end = (s + 1) * n / splits;
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(posteriors[0].size());
    for (Index i = begin; i < end; ++i) marginal += posteriors[static_cast<std::size_t>(i)];
    marginal /= double(end - begin);
    double kl = 0;
    for (Index i = begin; i < end; ++i) {
      const Eigen::VectorXd& p = posteriors[static_cast<std::size_t>(i)];
      for (Index y = 0; y < p.size(); ++y)
        if (p(y) > 0) kl += p(y) * (std::log(p(y)) - std::log(marginal(y)));
    }
    scores.push_back(std::exp(kl / double(end - begin)));
  }
  ScoreStats st;
  for (double v : scores) st.mean += v;
  st.mean /= double(scores.size());
  for (double v : scores) st.stddev += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(st.stddev / double(scores.size()));
  return st;
}

ScoreStats inception_score(const std::vector<ImageTensor>& images, const ClassifierBackend& classifier,
                           Index splits) {
  std::vector<Eigen::VectorXd> posteriors;
  posteriors.reserve(images.size());
  for (const auto& img : images) {
    require_image(img, "image");
    posteriors.push_back(classifier.classify(img));
  }
  return inception_score_from_posteriors(posteriors, splits);
}

ScoreStats mask_is(const std::vector<ImageTensor>& images, const std::vector<MaskImage>& masks,
                   const ClassifierBackend& classifier, Index splits) {
  if (images.size() != masks.size()) throw ShapeError("mask-IS needs one mask per image");
  std::vector<ImageTensor> masked;
  masked.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) masked.push_back(apply_mask(images[i], masks[i]));
  return inception_score(masked, classifier, splits);
}

PckhCount pckh_counts(const KeypointSet& generated, const KeypointSet& target) {
  const Keypoint& nose = target[kNose];
  const Keypoint& neck = target[kNeck];
  if (!nose.visible || !neck.visible) throw ValidationError("PCKh: target nose and neck must both be visible");
  const double head = std::hypot(nose.x - neck.x, nose.y - neck.y);
  if (!(head > 0)) throw ValidationError("PCKh: target head segment has zero length");
  const double threshold = 0.5 * head;
  PckhCount count;
  for (Index j = 0; j < kNumJoints; ++j) {
    const Keypoint& t = target.joints()[static_cast<std::size_t>(j)];
    if (!t.visible) continue;
    ++count.total;
    const Keypoint& g = generated.joints()[static_cast<std::size_t>(j)];
    if (g.visible && std::hypot(g.x - t.x, g.y - t.y) <= threshold) ++count.correct;
  }
  return count;
}

double pckh(const KeypointSet& generated, const KeypointSet& target) {
  const PckhCount c = pckh_counts(generated, target);
  if (c.total == 0) throw ValidationError("PCKh: target has no visible joints");
  return double(c.correct) / double(c.total);
}

}  // namespace pona
