#ifndef PONA_TESTS_SUPPORT_HPP
#define PONA_TESTS_SUPPORT_HPP

// Shared fixtures and brute-force reference implementations for the test binaries.

#include "pona/attention.hpp"
#include "pona/config.hpp"
#include "pona/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace pona::testing {

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<Scalar> t(s);
  for (Index j = 0; j < t.data.cols(); ++j)
    for (Index i = 0; i < t.data.rows(); ++i) t.data(i, j) = static_cast<Scalar>(dist(rng));
  return t;
}

inline Eigen::MatrixXd random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = dist(rng);
  return m;
}

/// Direct nested-loop convolution with zero padding; weight layout (out, ky, kx, in).
inline Tensor<double> naive_conv(const Tensor<double>& x, const Eigen::MatrixXd& w, const Eigen::VectorXd* bias,
                                 Index out_channels, Index k, Index stride, Index pad) {
  const Shape& s = x.shape;
  const Index oh = (s.height + 2 * pad - k) / stride + 1;
  const Index ow = (s.width + 2 * pad - k) / stride + 1;
  Tensor<double> out(Shape{s.batch, out_channels, oh, ow});
  for (Index b = 0; b < s.batch; ++b)
    for (Index o = 0; o < out_channels; ++o)
      for (Index y = 0; y < oh; ++y)
        for (Index xo = 0; xo < ow; ++xo) {
          double acc = bias ? (*bias)(o) : 0.0;
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const Index iy = y * stride + ky - pad;
              const Index ix = xo * stride + kx - pad;
              if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
              for (Index c = 0; c < s.channels; ++c) acc += w(o, (ky * k + kx) * s.channels + c) * x(b, c, iy, ix);
            }
          out(b, o, y, xo) = acc;
        }
  return out;
}

/// Attention by definition: scores s_ji = k_i . q_j, softmax over i per output j, then
/// out_j = x_j + gamma * W_t sum_i a_ji W_h x_i.
struct NaiveAttention {
  Eigen::MatrixXd map;  // N x N, row j = distribution over sources i
  Eigen::MatrixXd out;  // C x N
};

inline NaiveAttention naive_attention(const Eigen::MatrixXd& guide, const Eigen::MatrixXd& code,
                                      const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wq,
                                      const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo, double gamma) {
  const Index n = guide.cols();
  NaiveAttention r;
  r.map.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    std::vector<double> s(static_cast<std::size_t>(n));
    double mx = -1e300;
    for (Index i = 0; i < n; ++i) {
      double acc = 0;
      for (Index a = 0; a < wk.rows(); ++a) {
        double ki = 0, qj = 0;
        for (Index c = 0; c < guide.rows(); ++c) {
          ki += wk(a, c) * guide(c, i);
          qj += wq(a, c) * guide(c, j);
        }
        acc += ki * qj;
      }
      s[static_cast<std::size_t>(i)] = acc;
      mx = std::max(mx, acc);
    }
    double z = 0;
    for (Index i = 0; i < n; ++i) z += std::exp(s[static_cast<std::size_t>(i)] - mx);
    for (Index i = 0; i < n; ++i) r.map(j, i) = std::exp(s[static_cast<std::size_t>(i)] - mx) / z;
  }
  const Index c = code.rows();
  r.out = code;
  for (Index j = 0; j < n; ++j)
    for (Index o = 0; o < c; ++o) {
      double acc = 0;
      for (Index m = 0; m < c; ++m) {
        double mixed = 0;
        for (Index i = 0; i < n; ++i) {
          double v = 0;
          for (Index q = 0; q < c; ++q) v += wv(m, q) * code(q, i);
          mixed += r.map(j, i) * v;
        }
        acc += wo(o, m) * mixed;
      }
      r.out(o, j) += gamma * acc;
    }
  return r;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pona_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline ExperimentConfig toy_config() {
  return load_config(std::string(PONA_SOURCE_DIR) + "/configs/toy.cfg");
}

/// Small double-precision setup for gradient checks.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.generator.base_channels = 2;
  cfg.generator.num_blocks = 2;
  cfg.generator.image_size = {8, 8};
  cfg.generator.attention_reduction = 4;
  cfg.discriminator.base_channels = 2;
  cfg.discriminator.attention_reduction = 2;
  cfg.training.batch_size = 2;
  cfg.training.extractor_channels = 3;
  return cfg;
}

}  // namespace pona::testing

#endif  // PONA_TESTS_SUPPORT_HPP
