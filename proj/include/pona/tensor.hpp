#ifndef PONA_TENSOR_HPP
#define PONA_TENSOR_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace pona {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  Index batch = 0;
  Index channels = 0;
  Index height = 0;
  Index width = 0;

  Index pixels() const { return height * width; }
  Index columns() const { return batch * height * width; }
  Index size() const { return channels * columns(); }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(batch) + "x" + std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }
};

// Dense NCHW-addressable tensor stored channel-major: a channels x (batch*height*width)
// matrix whose column (b*H + y)*W + x holds every channel of one pixel. A 1x1 convolution is
// then a single matrix product and a sample's spatial block is a contiguous column range.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Matrix<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(Matrix<Scalar>::Zero(s.channels, s.columns())) {}
  Tensor(Shape s, Matrix<Scalar> values) : shape(s), data(std::move(values)) {
    if (data.rows() != s.channels || data.cols() != s.columns())
      throw ShapeError("tensor data does not match shape " + s.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor constant(Shape s, Scalar v) { return Tensor(s, Matrix<Scalar>::Constant(s.channels, s.columns(), v)); }

  Index column(Index b, Index y, Index x) const { return (b * shape.height + y) * shape.width + x; }
  Scalar& operator()(Index b, Index c, Index y, Index x) { return data(c, column(b, y, x)); }
  Scalar operator()(Index b, Index c, Index y, Index x) const { return data(c, column(b, y, x)); }

  auto sample(Index b) { return data.middleCols(b * shape.pixels(), shape.pixels()); }
  auto sample(Index b) const { return data.middleCols(b * shape.pixels(), shape.pixels()); }

  Tensor slice_batch(Index b) const {
    Shape s = shape;
    s.batch = 1;
    return Tensor(s, Matrix<Scalar>(sample(b)));
  }

  Tensor slice_channels(Index first, Index count) const {
    Shape s = shape;
    s.channels = count;
    return Tensor(s, Matrix<Scalar>(data.middleRows(first, count)));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, data.template cast<Other>());
  }

  bool all_finite() const { return data.allFinite(); }
};

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape.batch != b.shape.batch || a.shape.height != b.shape.height || a.shape.width != b.shape.width)
    throw ShapeError("channel concatenation needs matching batch/spatial sizes: " + a.shape.str() + " vs " +
                     b.shape.str());
  Shape s = a.shape;
  s.channels = a.shape.channels + b.shape.channels;
  Matrix<Scalar> m(s.channels, s.columns());
  m << a.data, b.data;
  return Tensor<Scalar>(s, std::move(m));
}

template <typename Scalar>
Tensor<Scalar> stack_batch(const std::vector<Tensor<Scalar>>& items) {
  if (items.empty()) throw ShapeError("cannot stack an empty batch");
  Shape s = items.front().shape;
  s.batch = 0;
  for (const auto& t : items) {
    if (t.shape.channels != s.channels || t.shape.height != s.height || t.shape.width != s.width)
      throw ShapeError("stack_batch: mismatched item shape " + t.shape.str());
    s.batch += t.shape.batch;
  }
  Matrix<Scalar> m(s.channels, s.columns());
  Index col = 0;
  for (const auto& t : items) {
    m.middleCols(col, t.data.cols()) = t.data;
    col += t.data.cols();
  }
  return Tensor<Scalar>(s, std::move(m));
}

}  // namespace pona

#endif  // PONA_TENSOR_HPP
