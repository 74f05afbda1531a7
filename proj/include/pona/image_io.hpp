#ifndef PONA_IMAGE_IO_HPP
#define PONA_IMAGE_IO_HPP

#include "pona/pose_encoding.hpp"
#include "pona/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pona {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(Index h, Index w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), fill) {}

  ImageSize size() const { return {height, width}; }
  std::uint8_t& at(Index y, Index x, Index c) { return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  bool operator==(const RgbImage&) const = default;
};

/// 8-bit single channel (masks: 0 background, nonzero foreground).
struct GrayImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(Index h, Index w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h * w), fill) {}

  ImageSize size() const { return {height, width}; }
  std::uint8_t& at(Index y, Index x) { return pixels[static_cast<std::size_t>(y * width + x)]; }
  std::uint8_t at(Index y, Index x) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
  bool operator==(const GrayImage&) const = default;
};

// Binary netpbm: P6 for RGB, P5 for single channel, maxval 255.
RgbImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& image);
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);
ImageSize read_image_size(const std::string& path);

/// Bilinear resampling; only used when a resize is explicitly configured.
RgbImage resize_bilinear(const RgbImage& image, ImageSize size);

/// Maps 0 -> -1 and 255 -> +1.
template <typename Scalar>
Tensor<Scalar> to_tensor(const RgbImage& image) {
  Tensor<Scalar> t(Shape{1, 3, image.height, image.width});
  for (Index y = 0; y < image.height; ++y)
    for (Index x = 0; x < image.width; ++x)
      for (Index c = 0; c < 3; ++c)
        t(0, c, y, x) = static_cast<Scalar>(double(image.at(y, x, c)) / 127.5 - 1.0);
  return t;
}

template <typename Scalar>
RgbImage to_rgb(const Tensor<Scalar>& t, Index sample = 0) {
  if (t.shape.channels != 3) throw ShapeError("to_rgb needs 3 channels, got " + t.shape.str());
  RgbImage img(t.shape.height, t.shape.width);
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x)
      for (Index c = 0; c < 3; ++c) {
        const double v = (double(t(sample, c, y, x)) + 1.0) * 127.5;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return img;
}

/// Binary mask matrix (height x width) with 1 where the mask pixel is nonzero.
Eigen::MatrixXd to_mask(const GrayImage& image);

}  // namespace pona

#endif  // PONA_IMAGE_IO_HPP
