#ifndef PONA_DATA_PIPELINE_HPP
#define PONA_DATA_PIPELINE_HPP

// Pair lists hold one `condition,target[,condition_mask,target_mask]` line per pair; paths
// are relative to the list's directory and key into a keypoint annotation file. An identity
// is the image file name up to its first underscore.

#include "pona/image_io.hpp"
#include "pona/pose_encoding.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pona {

struct PairEntry {
  std::string condition;
  std::string target;
  std::optional<std::string> condition_mask;
  std::optional<std::string> target_mask;
  bool operator==(const PairEntry&) const = default;
};

std::vector<PairEntry> read_pair_list(const std::string& path);
void write_pair_list(const std::string& path, const std::vector<PairEntry>& pairs);

struct PairRecord {
  std::string condition_image_path;  // resolved
  std::string target_image_path;
  KeypointSet condition_keypoints;
  KeypointSet target_keypoints;
  std::optional<std::string> condition_mask_path;
  std::optional<std::string> target_mask_path;
  std::string condition_identity;
  std::string target_identity;
};

std::string identity_of(const std::string& path);

/// Validates every referenced file and keypoint; errors name the pair-list line.
std::vector<PairRecord> load_pairs(const std::string& pair_list_file, const std::string& annotation_file);

struct LoadedPair {
  PairRecord record;
  RgbImage condition;
  RgbImage target;
  std::optional<GrayImage> condition_mask;
  std::optional<GrayImage> target_mask;
};

/// Decodes images. With `resize`, images, masks and keypoints are resampled to that size;
/// otherwise any size mismatch against `expected` is an error.
std::vector<LoadedPair> load_images(const std::vector<PairRecord>& records, ImageSize expected, bool resize);

template <typename Scalar>
struct Batch {
  Tensor<Scalar> condition_image;  // B x 3 x H x W
  Tensor<Scalar> pose_pair;        // B x 36 x H x W (condition, target)
  Tensor<Scalar> target_pose;      // B x 18 x H x W
  Tensor<Scalar> target_image;     // B x 3 x H x W
  Index size() const { return condition_image.shape.batch; }
};

template <typename Scalar>
Batch<Scalar> assemble_batch(const std::vector<LoadedPair>& pairs, const std::vector<Index>& indices, double sigma) {
  if (indices.empty()) throw ValidationError("cannot assemble an empty batch");
  std::vector<Tensor<Scalar>> ci, pp, tp, ti;
  for (Index i : indices) {
    const LoadedPair& p = pairs.at(static_cast<std::size_t>(i));
    const auto cpose = encode_pose<Scalar>(p.record.condition_keypoints, sigma);
    const auto tpose = encode_pose<Scalar>(p.record.target_keypoints, sigma);
    ci.push_back(to_tensor<Scalar>(p.condition));
    ti.push_back(to_tensor<Scalar>(p.target));
    pp.push_back(concat_pose_pair(cpose, tpose));
    tp.push_back(tpose.data);
  }
  return {stack_batch(ci), stack_batch(pp), stack_batch(tp), stack_batch(ti)};
}

/// Seeded permutation of [0, n) cut into batches; the last batch may be partial.
std::vector<std::vector<Index>> batch_schedule(Index n, Index batch_size, std::uint64_t seed, std::uint64_t epoch);

/// Indices for global step `step` when every epoch reshuffles with (seed, epoch).
std::vector<Index> batch_for_step(Index n, Index batch_size, std::uint64_t seed, Index step);

struct SyntheticSpec {
  Index num_identities = 8;
  Index poses_per_identity = 2;
  Index test_identities = 2;
  ImageSize image_size{32, 16};
  std::uint64_t seed = 0;

  void validate() const;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Saturated per-joint marker colors; never produced by limb or background pixels.
const std::array<Rgb, kNumJoints>& joint_marker_palette();

struct SyntheticPerson {
  std::string identity;
  Rgb upper_color{};
  Rgb lower_color{};
  std::vector<std::string> files;  // image file names, one per pose
  std::vector<KeypointSet> poses;
  std::vector<RgbImage> images;
  std::vector<GrayImage> masks;
};

struct SyntheticDataset {
  SyntheticSpec spec;
  std::vector<SyntheticPerson> persons;
  std::vector<PairEntry> train_pairs;
  std::vector<PairEntry> test_pairs;
};

/// Stick figures with identity-specific limb colors; all ordered pose pairs per identity.
/// Training identities come first, held-out test identities after them.
SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec);

/// Writes images/, masks/, annotations.txt, train_pairs.csv and test_pairs.csv under `dir`.
void write_synthetic_dataset(const SyntheticDataset& data, const std::string& dir);

RgbImage render_stick_figure(const KeypointSet& pose, Rgb upper, Rgb lower, GrayImage* mask = nullptr);

inline constexpr Rgb kBackground{96, 96, 96};

}  // namespace pona

#endif  // PONA_DATA_PIPELINE_HPP
