#ifndef PONA_POSE_ENCODING_HPP
#define PONA_POSE_ENCODING_HPP

#include "pona/tensor.hpp"

#include <array>
#include <cmath>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pona {

inline constexpr Index kNumJoints = 18;
inline constexpr double kDefaultSigma = 6.0;

// COCO-style 18-joint ordering produced by OpenPose-family estimators.
enum Joint : Index {
  kNose = 0,
  kNeck,
  kRightShoulder,
  kRightElbow,
  kRightWrist,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
  kRightHip,
  kRightKnee,
  kRightAnkle,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kRightEye,
  kLeftEye,
  kRightEar,
  kLeftEar,
};

std::string_view joint_name(Index joint);

struct ImageSize {
  Index height = 0;
  Index width = 0;
  bool operator==(const ImageSize&) const = default;
};

struct Keypoint {
  double x = -1;
  double y = -1;
  bool visible = false;
  bool operator==(const Keypoint&) const = default;
};

using JointArray = std::array<Keypoint, kNumJoints>;

/// 18 joints in pixel coordinates (zero-indexed pixel centers) for an image of known size.
class KeypointSet {
 public:
  KeypointSet() = default;

  /// Throws ValidationError naming the first visible joint that falls outside the image.
  KeypointSet(const JointArray& joints, ImageSize size);

  const JointArray& joints() const { return joints_; }
  const Keypoint& operator[](Index i) const { return joints_[static_cast<std::size_t>(i)]; }
  ImageSize image_size() const { return size_; }

  KeypointSet translated(double dx, double dy) const;
  bool operator==(const KeypointSet&) const = default;

 private:
  JointArray joints_{};
  ImageSize size_{};
};

/// 18-channel Gaussian joint response map, one channel per joint.
template <typename Scalar>
struct PoseHeatmap {
  Tensor<Scalar> data;  // 1 x 18 x H x W
  double sigma = kDefaultSigma;
};

/// Channel i at pixel k holds exp(-|k - k_i|^2 / sigma^2) for visible joint i and 0 otherwise.
template <typename Scalar>
PoseHeatmap<Scalar> encode_pose(const KeypointSet& keypoints, double sigma = kDefaultSigma) {
  if (!(sigma > 0)) throw ValidationError("heatmap sigma must be positive");
  const ImageSize size = keypoints.image_size();
  PoseHeatmap<Scalar> map{Tensor<Scalar>(Shape{1, kNumJoints, size.height, size.width}), sigma};
  const double inv = 1.0 / (sigma * sigma);
  for (Index j = 0; j < kNumJoints; ++j) {
    const Keypoint& kp = keypoints[j];
    if (!kp.visible) continue;
    for (Index y = 0; y < size.height; ++y)
      for (Index x = 0; x < size.width; ++x) {
        const double dx = double(x) - kp.x;
        const double dy = double(y) - kp.y;
        map.data(0, j, y, x) = static_cast<Scalar>(std::exp(-(dx * dx + dy * dy) * inv));
      }
  }
  return map;
}

/// Depth-wise concatenation: channels 0-17 condition, 18-35 target.
template <typename Scalar>
Tensor<Scalar> concat_pose_pair(const PoseHeatmap<Scalar>& condition, const PoseHeatmap<Scalar>& target) {
  if (condition.data.shape.height != target.data.shape.height || condition.data.shape.width != target.data.shape.width)
    throw ShapeError("pose pair size mismatch: " + condition.data.shape.str() + " vs " + target.data.shape.str());
  return concat_channels(condition.data, target.data);
}

/// One line of a keypoint annotation file: `<image path> x0 y0 v0 ... x17 y17 v17`.
/// Missing joints are written as `-1 -1 0`.
struct KeypointRecord {
  std::string image_path;
  JointArray joints{};
  bool operator==(const KeypointRecord&) const = default;
};

std::vector<KeypointRecord> read_keypoint_records(std::istream& in, const std::string& source = "<stream>");
std::vector<KeypointRecord> read_keypoint_file(const std::string& path);
void write_keypoint_records(std::ostream& out, const std::vector<KeypointRecord>& records);
void write_keypoint_file(const std::string& path, const std::vector<KeypointRecord>& records);

}  // namespace pona

#endif  // PONA_POSE_ENCODING_HPP
