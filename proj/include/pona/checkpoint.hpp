#ifndef PONA_CHECKPOINT_HPP
#define PONA_CHECKPOINT_HPP

// Binary checkpoint container: magic "PONACKPT", format version, scalar width, the config
// echo, the step index, integer counters and named little-endian arrays in insertion order.

#include "pona/tensor.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pona {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Eigen::MatrixXd value;  // widened copy; narrowing back to the stored width is exact
};

class Checkpoint {
 public:
  std::uint32_t scalar_bytes = 4;
  std::string config_text;
  std::int64_t step = 0;
  std::map<std::string, std::int64_t> counters;
  std::vector<NamedArray> arrays;

  template <typename Scalar, typename Derived>
  void put(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    static_assert(std::is_same_v<typename Derived::Scalar, Scalar>);
    arrays.push_back({name, m.template cast<double>()});
  }

  bool has(const std::string& name) const;
  const Eigen::MatrixXd& array(const std::string& name) const;

  /// Copies a stored array into `out`, which must already have the stored shape.
  template <typename Scalar>
  void get(const std::string& name, Matrix<Scalar>& out) const {
    const Eigen::MatrixXd& a = array(name);
    if (a.rows() != out.rows() || a.cols() != out.cols())
      throw CheckpointError("checkpoint array " + name + " is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ", model expects " + std::to_string(out.rows()) + "x" +
                            std::to_string(out.cols()));
    out = a.cast<Scalar>();
  }

  std::int64_t counter(const std::string& name) const;

  std::string serialize() const;
  static Checkpoint parse(const std::string& bytes, const std::string& source = "<memory>");

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace pona

#endif  // PONA_CHECKPOINT_HPP
