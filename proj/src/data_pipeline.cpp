#include "pona/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace pona {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  auto q = [&](double u) { return static_cast<std::uint8_t>(std::lround((u + m) * 255.0)); };
  return {q(r), q(g), q(b)};
}

// Reference stance in normalized (u across width, v down height) coordinates.
constexpr std::array<std::array<double, 2>, kNumJoints> kStance = {{
    {0.50, 0.12}, {0.50, 0.25}, {0.30, 0.27}, {0.22, 0.42}, {0.18, 0.56}, {0.70, 0.27},
    {0.78, 0.42}, {0.82, 0.56}, {0.38, 0.55}, {0.36, 0.72}, {0.35, 0.90}, {0.62, 0.55},
    {0.64, 0.72}, {0.65, 0.90}, {0.44, 0.09}, {0.56, 0.09}, {0.36, 0.12}, {0.64, 0.12},
}};

struct Limb {
  Index a, b;
  bool upper;
};

constexpr std::array<Limb, 17> kLimbs = {{
    {kNeck, kRightHip, true},       {kNeck, kLeftHip, true},         {kRightHip, kRightKnee, false},
    {kRightKnee, kRightAnkle, false}, {kLeftHip, kLeftKnee, false},    {kLeftKnee, kLeftAnkle, false},
    {kNeck, kRightShoulder, true},  {kRightShoulder, kRightElbow, true}, {kRightElbow, kRightWrist, true},
    {kNeck, kLeftShoulder, true},   {kLeftShoulder, kLeftElbow, true},   {kLeftElbow, kLeftWrist, true},
    {kNeck, kNose, true},           {kNose, kRightEye, true},            {kRightEye, kRightEar, true},
    {kNose, kLeftEye, true},        {kLeftEye, kLeftEar, true},
}};

bool is_extremity(Index j) {
  return j == kRightElbow || j == kRightWrist || j == kLeftElbow || j == kLeftWrist || j == kRightKnee ||
         j == kRightAnkle || j == kLeftKnee || j == kLeftAnkle;
}

KeypointSet random_pose(std::mt19937_64& rng, ImageSize size) {
  std::uniform_real_distribution<double> shift(-0.05, 0.05);
  std::uniform_real_distribution<double> du(-0.14, 0.14);
  std::uniform_real_distribution<double> dv(-0.07, 0.07);
  while (true) {
    const double gx = shift(rng);
    const double gy = shift(rng);
    JointArray joints{};
    std::set<std::pair<Index, Index>> used;
    bool ok = true;
    for (Index j = 0; j < kNumJoints; ++j) {
      double u = kStance[static_cast<std::size_t>(j)][0] + gx;
      double v = kStance[static_cast<std::size_t>(j)][1] + gy;
      if (is_extremity(j)) {
        u += du(rng);
        v += dv(rng);
      }
      const auto x = static_cast<Index>(std::lround(std::clamp(u, 0.0, 1.0) * double(size.width - 1)));
      const auto y = static_cast<Index>(std::lround(std::clamp(v, 0.0, 1.0) * double(size.height - 1)));
      ok = ok && used.insert({x, y}).second;
      joints[static_cast<std::size_t>(j)] = {double(x), double(y), true};
    }
    if (ok) return KeypointSet(joints, size);
  }
}

double segment_distance(double px, double py, const Keypoint& a, const Keypoint& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.x + t * vx), py - (a.y + t * vy));
}

RgbImage resize_rgb_if(const RgbImage& img, ImageSize size) {
  return img.size() == size ? img : resize_bilinear(img, size);
}

GrayImage resize_mask_nearest(const GrayImage& img, ImageSize size) {
  if (img.size() == size) return img;
  GrayImage out(size.height, size.width);
  for (Index y = 0; y < size.height; ++y)
    for (Index x = 0; x < size.width; ++x) {
      const Index sy = std::min(img.height - 1, Index((double(y) + 0.5) * double(img.height) / double(size.height)));
      const Index sx = std::min(img.width - 1, Index((double(x) + 0.5) * double(img.width) / double(size.width)));
      out.at(y, x) = img.at(sy, sx);
    }
  return out;
}

KeypointSet rescale(const KeypointSet& kps, ImageSize size) {
  const ImageSize from = kps.image_size();
  if (from == size) return kps;
  JointArray joints = kps.joints();
  for (auto& kp : joints) {
    if (!kp.visible) continue;
    kp.x = std::clamp((kp.x + 0.5) * double(size.width) / double(from.width) - 0.5, 0.0, double(size.width - 1));
    kp.y = std::clamp((kp.y + 0.5) * double(size.height) / double(from.height) - 0.5, 0.0, double(size.height - 1));
  }
  return KeypointSet(joints, size);
}

}  // namespace

std::vector<PairEntry> read_pair_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair list " + path);
  std::vector<PairEntry> pairs;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto f = split_commas(body);
    if ((f.size() != 2 && f.size() != 4) || std::any_of(f.begin(), f.end(), [](const auto& s) { return s.empty(); }))
      throw ValidationError(path + ":" + std::to_string(n) +
                            ": expected 'condition,target' or 'condition,target,condition_mask,target_mask'");
    PairEntry e{f[0], f[1], std::nullopt, std::nullopt};
    if (f.size() == 4) {
      e.condition_mask = f[2];
      e.target_mask = f[3];
    }
    pairs.push_back(std::move(e));
  }
  return pairs;
}

void write_pair_list(const std::string& path, const std::vector<PairEntry>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pair list " + path);
  for (const auto& p : pairs) {
    out << p.condition << ',' << p.target;
    if (p.condition_mask && p.target_mask) out << ',' << *p.condition_mask << ',' << *p.target_mask;
    out << '\n';
  }
  if (!out) throw IoError("failed writing pair list " + path);
}

std::string identity_of(const std::string& path) {
  const std::string stem = fs::path(path).stem().string();
  return stem.substr(0, stem.find('_'));
}

std::vector<PairRecord> load_pairs(const std::string& pair_list_file, const std::string& annotation_file) {
  const auto entries = read_pair_list(pair_list_file);
  const fs::path base = fs::path(pair_list_file).parent_path();
  std::map<std::string, JointArray> annotations;
  for (const auto& rec : read_keypoint_file(annotation_file)) annotations[rec.image_path] = rec.joints;

  // Pair-list lines, skipping blanks and comments, so errors can cite the source line.
  std::vector<int> line_numbers;
  {
    std::ifstream in(pair_list_file);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      const std::string body = trim(line);
      if (!body.empty() && body.front() != '#') line_numbers.push_back(n);
    }
  }

  std::vector<PairRecord> records;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const PairEntry& e = entries[i];
    const std::string where = pair_list_file + ":" + std::to_string(line_numbers.at(i)) + ": ";
    auto keypoints_for = [&](const std::string& image) {
      const std::string path = resolve(base, image);
      if (!fs::exists(path)) throw IoError(where + "missing image " + path);
      auto it = annotations.find(image);
      if (it == annotations.end()) throw ValidationError(where + "no keypoint annotation for " + image);
      try {
        return KeypointSet(it->second, read_image_size(path));
      } catch (const ValidationError& err) {
        throw ValidationError(where + image + ": " + err.what());
      }
    };
    auto mask_path = [&](const std::optional<std::string>& m) -> std::optional<std::string> {
      if (!m) return std::nullopt;
      const std::string path = resolve(base, *m);
      if (!fs::exists(path)) throw IoError(where + "missing mask " + path);
      return path;
    };
    PairRecord r;
    r.condition_image_path = resolve(base, e.condition);
    r.target_image_path = resolve(base, e.target);
    r.condition_keypoints = keypoints_for(e.condition);
    r.target_keypoints = keypoints_for(e.target);
    r.condition_mask_path = mask_path(e.condition_mask);
    r.target_mask_path = mask_path(e.target_mask);
    r.condition_identity = identity_of(e.condition);
    r.target_identity = identity_of(e.target);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<LoadedPair> load_images(const std::vector<PairRecord>& records, ImageSize expected, bool resize) {
  std::vector<LoadedPair> out;
  for (const auto& r : records) {
    LoadedPair p{r, read_ppm(r.condition_image_path), read_ppm(r.target_image_path), std::nullopt, std::nullopt};
    if (r.condition_mask_path) p.condition_mask = read_pgm(*r.condition_mask_path);
    if (r.target_mask_path) p.target_mask = read_pgm(*r.target_mask_path);
    auto check = [&](ImageSize got, const std::string& path) {
      if (got != expected && !resize)
        throw ValidationError(path + " is " + std::to_string(got.height) + "x" + std::to_string(got.width) +
                              " but the model expects " + std::to_string(expected.height) + "x" +
                              std::to_string(expected.width) + " (enable data.resize to resample)");
    };
    check(p.condition.size(), r.condition_image_path);
    check(p.target.size(), r.target_image_path);
    if (p.condition_mask) check(p.condition_mask->size(), *r.condition_mask_path);
    if (p.target_mask) check(p.target_mask->size(), *r.target_mask_path);
    if (p.condition_mask && p.condition_mask->size() != p.condition.size())
      throw ValidationError(*r.condition_mask_path + ": mask size differs from its image");
    if (p.target_mask && p.target_mask->size() != p.target.size())
      throw ValidationError(*r.target_mask_path + ": mask size differs from its image");
    p.condition = resize_rgb_if(p.condition, expected);
    p.target = resize_rgb_if(p.target, expected);
    if (p.condition_mask) p.condition_mask = resize_mask_nearest(*p.condition_mask, expected);
    if (p.target_mask) p.target_mask = resize_mask_nearest(*p.target_mask, expected);
    p.record.condition_keypoints = rescale(r.condition_keypoints, expected);
    p.record.target_keypoints = rescale(r.target_keypoints, expected);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<Index>> batch_schedule(Index n, Index batch_size, std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  return batches;
}

std::vector<Index> batch_for_step(Index n, Index batch_size, std::uint64_t seed, Index step) {
  if (n < 1) throw ValidationError("dataset has no pairs");
  const Index per_epoch = (n + batch_size - 1) / batch_size;
  return batch_schedule(n, batch_size, seed, std::uint64_t(step / per_epoch))[static_cast<std::size_t>(step % per_epoch)];
}

void SyntheticSpec::validate() const {
  if (num_identities < 1) throw ValidationError("synthetic num_identities must be >= 1");
  if (poses_per_identity < 2) throw ValidationError("synthetic poses_per_identity must be >= 2");
  if (test_identities < 0) throw ValidationError("synthetic test_identities must be >= 0");
  if (image_size.height < 16 || image_size.width < 12)
    throw ValidationError("synthetic images must be at least 16x12");
}

const std::array<Rgb, kNumJoints>& joint_marker_palette() {
  static const std::array<Rgb, kNumJoints> palette = [] {
    std::array<Rgb, kNumJoints> p{};
    for (Index j = 0; j < kNumJoints; ++j) p[static_cast<std::size_t>(j)] = hsv(double(j) / double(kNumJoints), 1.0, 1.0);
    return p;
  }();
  return palette;
}

RgbImage render_stick_figure(const KeypointSet& pose, Rgb upper, Rgb lower, GrayImage* mask) {
  const ImageSize size = pose.image_size();
  RgbImage img(size.height, size.width);
  GrayImage m(size.height, size.width, 0);
  for (Index y = 0; y < size.height; ++y)
    for (Index x = 0; x < size.width; ++x)
      for (Index c = 0; c < 3; ++c) img.at(y, x, c) = kBackground[static_cast<std::size_t>(c)];
  for (const Limb& limb : kLimbs) {
    const Keypoint& a = pose[limb.a];
    const Keypoint& b = pose[limb.b];
    if (!a.visible || !b.visible) continue;
    const Rgb& color = limb.upper ? upper : lower;
    for (Index y = 0; y < size.height; ++y)
      for (Index x = 0; x < size.width; ++x)
        if (segment_distance(double(x), double(y), a, b) <= 0.75) {
          for (Index c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
          m.at(y, x) = 255;
        }
  }
  const auto& palette = joint_marker_palette();
  for (Index j = 0; j < kNumJoints; ++j) {
    const Keypoint& kp = pose[j];
    if (!kp.visible) continue;
    const auto x = static_cast<Index>(std::lround(kp.x));
    const auto y = static_cast<Index>(std::lround(kp.y));
    for (Index c = 0; c < 3; ++c) img.at(y, x, c) = palette[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    m.at(y, x) = 255;
  }
  if (mask) *mask = std::move(m);
  return img;
}

SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset data;
  data.spec = spec;
  std::mt19937_64 rng(spec.seed);
  const Index total = spec.num_identities + spec.test_identities;
  for (Index i = 0; i < total; ++i) {
    SyntheticPerson person;
    char name[16];
    std::snprintf(name, sizeof(name), "p%03lld", static_cast<long long>(i));
    person.identity = name;
    const double hue = double(i) / double(total);
    person.upper_color = hsv(hue, 0.6, 0.7);
    person.lower_color = hsv(hue + 0.37, 0.6, 0.7);
    for (Index k = 0; k < spec.poses_per_identity; ++k) {
      const KeypointSet pose = random_pose(rng, spec.image_size);
      GrayImage mask;
      person.images.push_back(render_stick_figure(pose, person.upper_color, person.lower_color, &mask));
      person.masks.push_back(std::move(mask));
      person.poses.push_back(pose);
      person.files.push_back(person.identity + "_" + std::to_string(k));
    }
    auto& list = i < spec.num_identities ? data.train_pairs : data.test_pairs;
    for (Index a = 0; a < spec.poses_per_identity; ++a)
      for (Index b = 0; b < spec.poses_per_identity; ++b) {
        if (a == b) continue;
        const std::string& fa = person.files[static_cast<std::size_t>(a)];
        const std::string& fb = person.files[static_cast<std::size_t>(b)];
        list.push_back({"images/" + fa + ".ppm", "images/" + fb + ".ppm", "masks/" + fa + ".pgm",
                        "masks/" + fb + ".pgm"});
      }
    data.persons.push_back(std::move(person));
  }
  return data;
}

void write_synthetic_dataset(const SyntheticDataset& data, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::vector<KeypointRecord> annotations;
  for (const auto& person : data.persons)
    for (std::size_t k = 0; k < person.files.size(); ++k) {
      write_ppm((root / "images" / (person.files[k] + ".ppm")).string(), person.images[k]);
      write_pgm((root / "masks" / (person.files[k] + ".pgm")).string(), person.masks[k]);
      annotations.push_back({"images/" + person.files[k] + ".ppm", person.poses[k].joints()});
    }
  write_keypoint_file((root / "annotations.txt").string(), annotations);
  write_pair_list((root / "train_pairs.csv").string(), data.train_pairs);
  write_pair_list((root / "test_pairs.csv").string(), data.test_pairs);
}

}  // namespace pona
