#include "pona/pose_encoding.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace pona {

namespace {

constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "nose",       "neck",      "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist", "r_hip",
    "r_knee",     "r_ankle",   "l_hip",      "l_knee",  "l_ankle", "r_eye",      "l_eye",   "r_ear",   "l_ear",
};

}  // namespace

std::string_view joint_name(Index joint) {
  if (joint < 0 || joint >= kNumJoints) return "unknown";
  return kJointNames[static_cast<std::size_t>(joint)];
}

KeypointSet::KeypointSet(const JointArray& joints, ImageSize size) : joints_(joints), size_(size) {
  if (size.height <= 0 || size.width <= 0) throw ValidationError("keypoint image size must be positive");
  for (Index i = 0; i < kNumJoints; ++i) {
    const Keypoint& kp = joints_[static_cast<std::size_t>(i)];
    if (!kp.visible) continue;
    if (!(kp.x >= 0 && kp.x < double(size.width) && kp.y >= 0 && kp.y < double(size.height))) {
      std::ostringstream msg;
      msg << "joint " << i << " (" << joint_name(i) << ") at (" << kp.x << ", " << kp.y << ") lies outside the "
          << size.height << "x" << size.width << " image";
      throw ValidationError(msg.str());
    }
  }
}

KeypointSet KeypointSet::translated(double dx, double dy) const {
  KeypointSet out = *this;
  for (auto& kp : out.joints_) {
    if (!kp.visible) continue;
    kp.x += dx;
    kp.y += dy;
  }
  return out;
}

std::vector<KeypointRecord> read_keypoint_records(std::istream& in, const std::string& source) {
  std::vector<KeypointRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    KeypointRecord rec;
    fields >> rec.image_path;
    for (Index j = 0; j < kNumJoints; ++j) {
      Keypoint& kp = rec.joints[static_cast<std::size_t>(j)];
      int visible = 0;
      if (!(fields >> kp.x >> kp.y >> visible) || (visible != 0 && visible != 1)) {
        throw ValidationError(source + ":" + std::to_string(line_no) + ": malformed triple for joint " +
                              std::to_string(j) + " (expected x y visible with visible in {0,1})");
      }
      kp.visible = visible == 1;
    }
    std::string extra;
    if (fields >> extra)
      throw ValidationError(source + ":" + std::to_string(line_no) + ": unexpected trailing field '" + extra + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<KeypointRecord> read_keypoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open keypoint file " + path);
  return read_keypoint_records(in, path);
}

void write_keypoint_records(std::ostream& out, const std::vector<KeypointRecord>& records) {
  for (const auto& rec : records) {
    out << rec.image_path;
    for (const auto& kp : rec.joints) {
      if (kp.visible)
        out << ' ' << std::setprecision(17) << kp.x << ' ' << kp.y << " 1";
      else
        out << " -1 -1 0";
    }
    out << '\n';
  }
}

void write_keypoint_file(const std::string& path, const std::vector<KeypointRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write keypoint file " + path);
  write_keypoint_records(out, records);
  if (!out) throw std::runtime_error("failed writing keypoint file " + path);
}

}  // namespace pona
