#include "pona/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pona {

namespace {

struct NetpbmHeader {
  std::string magic;
  Index width = 0;
  Index height = 0;
  int maxval = 0;
};

void skip_space_and_comments(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

NetpbmHeader read_header(std::istream& in, const std::string& path) {
  NetpbmHeader h;
  in >> h.magic;
  skip_space_and_comments(in);
  in >> h.width;
  skip_space_and_comments(in);
  in >> h.height;
  skip_space_and_comments(in);
  in >> h.maxval;
  if (!in || (h.magic != "P6" && h.magic != "P5") || h.width <= 0 || h.height <= 0)
    throw IoError(path + ": not a binary netpbm (P5/P6) image");
  if (h.maxval != 255) throw IoError(path + ": only 8-bit (maxval 255) images are supported");
  in.get();  // single whitespace before the raster
  return h;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  return in;
}

void write_raster(const std::string& path, const char* magic, Index width, Index height,
                  const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing image " + path);
}

}  // namespace

RgbImage read_ppm(const std::string& path) {
  auto in = open_input(path);
  const NetpbmHeader h = read_header(in, path);
  if (h.magic != "P6") throw IoError(path + ": expected an RGB (P6) image");
  RgbImage img(h.height, h.width);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError(path + ": truncated raster");
  return img;
}

void write_ppm(const std::string& path, const RgbImage& image) {
  write_raster(path, "P6", image.width, image.height, image.pixels);
}

GrayImage read_pgm(const std::string& path) {
  auto in = open_input(path);
  const NetpbmHeader h = read_header(in, path);
  if (h.magic != "P5") throw IoError(path + ": expected a single-channel (P5) image");
  GrayImage img(h.height, h.width);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError(path + ": truncated raster");
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  write_raster(path, "P5", image.width, image.height, image.pixels);
}

ImageSize read_image_size(const std::string& path) {
  auto in = open_input(path);
  const NetpbmHeader h = read_header(in, path);
  return {h.height, h.width};
}

RgbImage resize_bilinear(const RgbImage& image, ImageSize size) {
  RgbImage out(size.height, size.width);
  const double sy = double(image.height) / double(size.height);
  const double sx = double(image.width) / double(size.width);
  for (Index y = 0; y < size.height; ++y) {
    const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
    const Index y0 = Index(fy);
    const Index y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - double(y0);
    for (Index x = 0; x < size.width; ++x) {
      const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
      const Index x0 = Index(fx);
      const Index x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - double(x0);
      for (Index c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c)) +
                         wy * ((1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Eigen::MatrixXd to_mask(const GrayImage& image) {
  Eigen::MatrixXd m(image.height, image.width);
  for (Index y = 0; y < image.height; ++y)
    for (Index x = 0; x < image.width; ++x) m(y, x) = image.at(y, x) != 0 ? 1.0 : 0.0;
  return m;
}

}  // namespace pona
