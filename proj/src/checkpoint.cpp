#include "pona/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pona {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'O', 'N', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void put_raw(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put_raw<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T raw(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string string(const char* what) {
    const auto n = raw<std::uint64_t>(what);
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::uint64_t n, const char* what) {
    if (n > bytes_.size() - pos_) throw CheckpointError(source_ + ": truncated while reading " + what);
  }

  bool done() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

const Eigen::MatrixXd& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a.value;
  throw CheckpointError("checkpoint has no array named " + name);
}

std::int64_t Checkpoint::counter(const std::string& name) const {
  auto it = counters.find(name);
  if (it == counters.end()) throw CheckpointError("checkpoint has no counter named " + name);
  return it->second;
}

std::string Checkpoint::serialize() const {
  if (scalar_bytes != 4 && scalar_bytes != 8) throw CheckpointError("scalar width must be 4 or 8 bytes");
  std::string out(kMagic, sizeof(kMagic));
  put_raw<std::uint32_t>(out, kCheckpointVersion);
  put_raw<std::uint32_t>(out, scalar_bytes);
  put_string(out, config_text);
  put_raw<std::int64_t>(out, step);
  put_raw<std::uint64_t>(out, counters.size());
  for (const auto& [name, value] : counters) {
    put_string(out, name);
    put_raw<std::int64_t>(out, value);
  }
  put_raw<std::uint64_t>(out, arrays.size());
  for (const auto& a : arrays) {
    put_string(out, a.name);
    put_raw<std::int64_t>(out, a.value.rows());
    put_raw<std::int64_t>(out, a.value.cols());
    for (Index j = 0; j < a.value.cols(); ++j)
      for (Index i = 0; i < a.value.rows(); ++i) {
        if (scalar_bytes == 4)
          put_raw<float>(out, static_cast<float>(a.value(i, j)));
        else
          put_raw<double>(out, a.value(i, j));
      }
  }
  return out;
}

Checkpoint Checkpoint::parse(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  r.need(sizeof(kMagic), "magic");
  if (bytes.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(source + ": not a checkpoint file");
  r.raw<std::uint64_t>("magic");
  Checkpoint c;
  const auto version = r.raw<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version));
  c.scalar_bytes = r.raw<std::uint32_t>("scalar width");
  if (c.scalar_bytes != 4 && c.scalar_bytes != 8)
    throw CheckpointError(source + ": invalid scalar width " + std::to_string(c.scalar_bytes));
  c.config_text = r.string("config");
  c.step = r.raw<std::int64_t>("step");
  const auto ncounters = r.raw<std::uint64_t>("counter count");
  for (std::uint64_t i = 0; i < ncounters; ++i) {
    std::string name = r.string("counter name");
    c.counters[name] = r.raw<std::int64_t>("counter value");
  }
  const auto narrays = r.raw<std::uint64_t>("array count");
  for (std::uint64_t k = 0; k < narrays; ++k) {
    NamedArray a;
    a.name = r.string("array name");
    const auto rows = r.raw<std::int64_t>("array rows");
    const auto cols = r.raw<std::int64_t>("array cols");
    if (rows < 0 || cols < 0) throw CheckpointError(source + ": negative shape for array " + a.name);
    r.need(std::uint64_t(rows) * std::uint64_t(cols) * c.scalar_bytes, a.name.c_str());
    a.value.resize(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i)
        a.value(i, j) = c.scalar_bytes == 4 ? double(r.raw<float>("array data")) : r.raw<double>("array data");
    c.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw CheckpointError(source + ": trailing bytes after the last array");
  return c;
}

void Checkpoint::save(const std::string& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace pona
