#ifndef PONA_OPS_HPP
#define PONA_OPS_HPP

// Differentiable building blocks recorded on a Tape. Every op computes its forward value
// eagerly and registers the matching vector-Jacobian product.

#include "pona/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <type_traits>

namespace pona {

namespace detail {

template <typename Scalar>
bool wants_grad(std::initializer_list<Var<Scalar>> inputs) {
  for (auto v : inputs)
    if (v->requires_grad) return true;
  return false;
}

inline Shape scalar_shape() { return Shape{1, 1, 1, 1}; }

template <typename Scalar>
Tensor<Scalar> scalar_tensor(Scalar v) {
  return Tensor<Scalar>::constant(scalar_shape(), v);
}

}  // namespace detail

struct ConvGeometry {
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
};

inline Shape conv_output_shape(const Shape& in, Index out_channels, const ConvGeometry& g) {
  const Index h = (in.height + 2 * g.padding - g.kernel) / g.stride + 1;
  const Index w = (in.width + 2 * g.padding - g.kernel) / g.stride + 1;
  if (h <= 0 || w <= 0) throw ShapeError("convolution input too small: " + in.str());
  return Shape{in.batch, out_channels, h, w};
}

// Patch matrix with row (ky*k + kx)*C + c and one column per output pixel; out-of-image taps
// stay zero (zero padding).
template <typename Scalar>
Matrix<Scalar> im2col(const Tensor<Scalar>& x, const ConvGeometry& g, const Shape& out) {
  const Index c = x.shape.channels;
  const Index k = g.kernel;
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(k * k * c, out.columns());
  for (Index b = 0; b < out.batch; ++b)
    for (Index oy = 0; oy < out.height; ++oy)
      for (Index ox = 0; ox < out.width; ++ox) {
        const Index col = (b * out.height + oy) * out.width + ox;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= x.shape.height) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= x.shape.width) continue;
            cols.block((ky * k + kx) * c, col, c, 1) = x.data.col(x.column(b, iy, ix));
          }
        }
      }
  return cols;
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& cols, const Shape& in, const ConvGeometry& g, const Shape& out,
                Matrix<Scalar>& dx) {
  const Index c = in.channels;
  const Index k = g.kernel;
  for (Index b = 0; b < out.batch; ++b)
    for (Index oy = 0; oy < out.height; ++oy)
      for (Index ox = 0; ox < out.width; ++ox) {
        const Index col = (b * out.height + oy) * out.width + ox;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= in.width) continue;
            dx.col((b * in.height + iy) * in.width + ix) += cols.block((ky * k + kx) * c, col, c, 1);
          }
        }
      }
}

/// Convolution with weight (out, k*k*in). Gradients are accumulated into `weight_grad` /
/// `bias_grad` when non-null; pass null for fixed filters.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, const Matrix<Scalar>& weight, const std::type_identity_t<Matrix<Scalar>>* bias,
                   std::type_identity_t<Matrix<Scalar>>* weight_grad, std::type_identity_t<Matrix<Scalar>>* bias_grad,
                   const ConvGeometry& g) {
  const Shape in = x->shape();
  if (weight.cols() != g.kernel * g.kernel * in.channels)
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.cols() / (g.kernel * g.kernel)) +
                     " input channels, got " + std::to_string(in.channels));
  const Shape out = conv_output_shape(in, weight.rows(), g);
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.padding == 0;

  auto cols = std::make_shared<Matrix<Scalar>>();
  if (!pointwise) *cols = im2col(x->value, g, out);
  const Matrix<Scalar>& patches = pointwise ? x->value.data : *cols;

  Tensor<Scalar> y(out);
  y.data.noalias() = weight * patches;
  if (bias) y.data.colwise() += bias->col(0);

  Tape<Scalar>* tape = x->tape;
  const bool grad = x->requires_grad || (weight_grad != nullptr && tape->grad_enabled());
  const Matrix<Scalar>* w = &weight;
  return tape->record(std::move(y), grad, [=](Node<Scalar>& self) {
    const Matrix<Scalar>& dy = self.grad;
    const Matrix<Scalar>& p = pointwise ? x->value.data : *cols;
    if (weight_grad) weight_grad->noalias() += dy * p.transpose();
    if (bias_grad) bias_grad->col(0) += dy.rowwise().sum();
    if (x->requires_grad) {
      if (pointwise) {
        x->grad_buffer().noalias() += w->transpose() * dy;
      } else {
        Matrix<Scalar> dcols = w->transpose() * dy;
        col2im_add(dcols, in, g, out, x->grad_buffer());
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Parameter<Scalar>& weight, Parameter<Scalar>* bias, const ConvGeometry& g) {
  return conv2d(x, weight.value, bias ? &bias->value : nullptr, &weight.grad, bias ? &bias->grad : nullptr, g);
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Parameter<Scalar>& weight, const ConvGeometry& g) {
  return conv2d(x, weight.value, nullptr, &weight.grad, nullptr, g);
}

enum class NormKind { batch, instance };

struct NormOptions {
  NormKind kind = NormKind::instance;
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch or instance normalization with a per-channel affine transform. Batch statistics are
/// taken over (batch, height, width); in inference mode batch norm uses the running buffers.
template <typename Scalar>
Var<Scalar> normalize(Var<Scalar> x, Parameter<Scalar>& scale, Parameter<Scalar>& shift, Matrix<Scalar>* running_mean,
                      Matrix<Scalar>* running_var, const NormOptions& opt) {
  const Shape s = x->shape();
  const Index c = s.channels;
  const Scalar eps = static_cast<Scalar>(opt.eps);
  const Index groups = opt.kind == NormKind::instance ? s.batch : 1;
  const Index span = s.columns() / groups;
  const bool use_running = opt.kind == NormKind::batch && !opt.training;
  if (use_running && (!running_mean || !running_var)) throw std::logic_error("batch norm needs running buffers");

  auto xhat = std::make_shared<Matrix<Scalar>>(c, s.columns());
  auto inv_std = std::make_shared<Matrix<Scalar>>(c, groups);
  for (Index gi = 0; gi < groups; ++gi) {
    auto block = x->value.data.middleCols(gi * span, span);
    Vector<Scalar> mean, var;
    if (use_running) {
      mean = running_mean->col(0);
      var = running_var->col(0);
    } else {
      mean = block.rowwise().mean();
      var = (block.colwise() - mean).array().square().rowwise().mean();
      if (opt.kind == NormKind::batch && opt.training && running_mean && running_var) {
        const Scalar m = static_cast<Scalar>(opt.momentum);
        const Scalar unbias = span > 1 ? Scalar(span) / Scalar(span - 1) : Scalar(1);
        running_mean->col(0) = (Scalar(1) - m) * running_mean->col(0) + m * mean;
        running_var->col(0) = (Scalar(1) - m) * running_var->col(0) + m * unbias * var;
      }
    }
    inv_std->col(gi) = (var.array() + eps).rsqrt();
    xhat->middleCols(gi * span, span) =
        ((block.colwise() - mean).array().colwise() * inv_std->col(gi).array()).matrix();
  }

  Tensor<Scalar> y(s);
  y.data = (xhat->array().colwise() * scale.value.col(0).array()).matrix();
  y.data.colwise() += shift.value.col(0);

  Tape<Scalar>* tape = x->tape;
  Parameter<Scalar>* sc = &scale;
  Parameter<Scalar>* sh = &shift;
  return tape->record(std::move(y), true, [=](Node<Scalar>& self) {
    const Matrix<Scalar>& dy = self.grad;
    sc->grad.col(0) += (dy.array() * xhat->array()).rowwise().sum().matrix();
    sh->grad.col(0) += dy.rowwise().sum();
    if (!x->requires_grad) return;
    Matrix<Scalar>& dx = x->grad_buffer();
    for (Index gi = 0; gi < groups; ++gi) {
      const auto dyb = dy.middleCols(gi * span, span);
      const auto xh = xhat->middleCols(gi * span, span);
      const Matrix<Scalar> dxhat = (dyb.array().colwise() * sc->value.col(0).array()).matrix();
      const auto inv = inv_std->col(gi).array();
      if (use_running) {
        dx.middleCols(gi * span, span) += (dxhat.array().colwise() * inv).matrix();
        continue;
      }
      const Vector<Scalar> sum_d = dxhat.rowwise().sum();
      const Vector<Scalar> sum_dx = (dxhat.array() * xh.array()).rowwise().sum();
      const Scalar m = Scalar(span);
      Matrix<Scalar> t = (m * dxhat.array()).matrix();
      t.colwise() -= sum_d;
      t -= (xh.array().colwise() * sum_dx.array()).matrix();
      dx.middleCols(gi * span, span) += (t.array().colwise() * (inv / m)).matrix();
    }
  });
}

template <typename Scalar, typename F, typename DF>
Var<Scalar> elementwise(Var<Scalar> x, F f, DF df_from_input_output) {
  Tensor<Scalar> y(x->shape(), x->value.data.unaryExpr(f));
  return x->tape->record(std::move(y), x->requires_grad, [=](Node<Scalar>& self) {
    x->grad_buffer().array() +=
        self.grad.array() * x->value.data.binaryExpr(self.value.data, df_from_input_output).array();
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> leaky_relu(Var<Scalar> x, double slope) {
  const Scalar a = static_cast<Scalar>(slope);
  return elementwise(
      x, [a](Scalar v) { return v > Scalar(0) ? v : a * v; },
      [a](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : a; });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  if (!(a->shape() == b->shape())) throw ShapeError("add: " + a->shape().str() + " vs " + b->shape().str());
  Tensor<Scalar> y(a->shape(), a->value.data + b->value.data);
  return a->tape->record(std::move(y), detail::wants_grad({a, b}), [=](Node<Scalar>& self) {
    if (a->requires_grad) a->grad_buffer() += self.grad;
    if (b->requires_grad) b->grad_buffer() += self.grad;
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, double factor) {
  const Scalar f = static_cast<Scalar>(factor);
  Tensor<Scalar> y(x->shape(), x->value.data * f);
  return x->tape->record(std::move(y), x->requires_grad,
                         [=](Node<Scalar>& self) { x->grad_buffer() += f * self.grad; });
}

/// gamma * x for a learnable 1x1 gate.
template <typename Scalar>
Var<Scalar> gate(Var<Scalar> x, Parameter<Scalar>& gamma) {
  const Scalar g = gamma.value(0, 0);
  Tensor<Scalar> y(x->shape(), g * x->value.data);
  Parameter<Scalar>* gp = &gamma;
  return x->tape->record(std::move(y), true, [=](Node<Scalar>& self) {
    gp->grad(0, 0) += (self.grad.array() * x->value.data.array()).sum();
    if (x->requires_grad) x->grad_buffer() += gp->value(0, 0) * self.grad;
  });
}

template <typename Scalar>
Var<Scalar> concat(Var<Scalar> a, Var<Scalar> b) {
  Tensor<Scalar> y = concat_channels(a->value, b->value);
  const Index ca = a->shape().channels;
  const Index cb = b->shape().channels;
  return a->tape->record(std::move(y), detail::wants_grad({a, b}), [=](Node<Scalar>& self) {
    if (a->requires_grad) a->grad_buffer() += self.grad.topRows(ca);
    if (b->requires_grad) b->grad_buffer() += self.grad.bottomRows(cb);
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest(Var<Scalar> x, Index factor) {
  const Shape in = x->shape();
  const Shape out{in.batch, in.channels, in.height * factor, in.width * factor};
  Tensor<Scalar> y(out);
  for (Index b = 0; b < out.batch; ++b)
    for (Index oy = 0; oy < out.height; ++oy)
      for (Index ox = 0; ox < out.width; ++ox)
        y.data.col(y.column(b, oy, ox)) = x->value.data.col(x->value.column(b, oy / factor, ox / factor));
  return x->tape->record(std::move(y), x->requires_grad, [=](Node<Scalar>& self) {
    Matrix<Scalar>& dx = x->grad_buffer();
    for (Index b = 0; b < out.batch; ++b)
      for (Index oy = 0; oy < out.height; ++oy)
        for (Index ox = 0; ox < out.width; ++ox)
          dx.col((b * in.height + oy / factor) * in.width + ox / factor) +=
              self.grad.col((b * out.height + oy) * out.width + ox);
  });
}

/// Spatial mean: (B, C, H, W) -> (B, C, 1, 1).
template <typename Scalar>
Var<Scalar> global_mean_pool(Var<Scalar> x) {
  const Shape in = x->shape();
  Tensor<Scalar> y(Shape{in.batch, in.channels, 1, 1});
  for (Index b = 0; b < in.batch; ++b) y.data.col(b) = x->value.sample(b).rowwise().mean();
  return x->tape->record(std::move(y), x->requires_grad, [=](Node<Scalar>& self) {
    Matrix<Scalar>& dx = x->grad_buffer();
    const Scalar inv = Scalar(1) / Scalar(in.pixels());
    for (Index b = 0; b < in.batch; ++b)
      dx.middleCols(b * in.pixels(), in.pixels()).colwise() += inv * self.grad.col(b);
  });
}

/// Column-softmax attention weights. For each sample, logits m(i, j) = key_i . query_j and
/// column j of the result is softmax over source locations i. Output shape is
/// (B, N, 1, N): channel i, pixel j holds the weight of source i for output location j.
template <typename Scalar>
Var<Scalar> attention_weights(Var<Scalar> keys, Var<Scalar> queries) {
  const Shape ks = keys->shape();
  if (!(ks == queries->shape())) throw ShapeError("attention keys/queries mismatch");
  const Index n = ks.pixels();
  Tensor<Scalar> a(Shape{ks.batch, n, 1, n});
  for (Index b = 0; b < ks.batch; ++b) {
    Matrix<Scalar> m = keys->value.sample(b).transpose() * queries->value.sample(b);
    m.rowwise() -= m.colwise().maxCoeff();
    m = m.array().exp().matrix();
    m.array().rowwise() /= m.colwise().sum().array();
    a.sample(b) = m;
  }
  return keys->tape->record(std::move(a), detail::wants_grad({keys, queries}), [=](Node<Scalar>& self) {
    for (Index b = 0; b < ks.batch; ++b) {
      const auto alpha = self.value.sample(b);
      const auto dalpha = self.grad.middleCols(b * n, n);
      const Eigen::Array<Scalar, 1, Eigen::Dynamic> dots = (alpha.array() * dalpha.array()).colwise().sum();
      const Matrix<Scalar> dm = (alpha.array() * (dalpha.array().rowwise() - dots)).matrix();
      if (keys->requires_grad)
        keys->grad_buffer().middleCols(b * n, n).noalias() += queries->value.sample(b) * dm.transpose();
      if (queries->requires_grad)
        queries->grad_buffer().middleCols(b * n, n).noalias() += keys->value.sample(b) * dm;
    }
  });
}

/// Mixes value features with attention weights: out_b = V_b * A_b (location j receives
/// sum_i A(i, j) V_i).
template <typename Scalar>
Var<Scalar> attend(Var<Scalar> values, Var<Scalar> weights) {
  const Shape vs = values->shape();
  const Index n = vs.pixels();
  if (weights->shape().channels != n || weights->shape().pixels() != n || weights->shape().batch != vs.batch)
    throw ShapeError("attention map of " + weights->shape().str() + " does not cover " + std::to_string(n) +
                     " locations");
  Tensor<Scalar> y(vs);
  for (Index b = 0; b < vs.batch; ++b) y.sample(b).noalias() = values->value.sample(b) * weights->value.sample(b);
  return values->tape->record(std::move(y), detail::wants_grad({values, weights}), [=](Node<Scalar>& self) {
    for (Index b = 0; b < vs.batch; ++b) {
      const auto dy = self.grad.middleCols(b * n, n);
      if (values->requires_grad)
        values->grad_buffer().middleCols(b * n, n).noalias() += dy * weights->value.sample(b).transpose();
      if (weights->requires_grad)
        weights->grad_buffer().middleCols(b * n, n).noalias() += values->value.sample(b).transpose() * dy;
    }
  });
}

/// mean |a - b| over all elements.
template <typename Scalar>
Var<Scalar> mean_abs_diff(Var<Scalar> a, Var<Scalar> b) {
  if (!(a->shape() == b->shape())) throw ShapeError("l1: " + a->shape().str() + " vs " + b->shape().str());
  const Scalar count = Scalar(a->value.data.size());
  const Scalar v = (a->value.data - b->value.data).array().abs().sum() / count;
  return a->tape->record(detail::scalar_tensor(v), detail::wants_grad({a, b}), [=](Node<Scalar>& self) {
    const Scalar g = self.grad(0, 0) / count;
    const Matrix<Scalar> sign = (a->value.data - b->value.data).array().sign().matrix();
    if (a->requires_grad) a->grad_buffer() += g * sign;
    if (b->requires_grad) b->grad_buffer() -= g * sign;
  });
}

/// Sum over channels of the per-channel mean |a - b| (mean over batch and pixels).
template <typename Scalar>
Var<Scalar> channel_l1_sum(Var<Scalar> a, Var<Scalar> b) {
  if (!(a->shape() == b->shape())) throw ShapeError("feature l1: " + a->shape().str() + " vs " + b->shape().str());
  const Scalar per_map = Scalar(a->shape().columns());
  const Scalar v = (a->value.data - b->value.data).array().abs().sum() / per_map;
  return a->tape->record(detail::scalar_tensor(v), detail::wants_grad({a, b}), [=](Node<Scalar>& self) {
    const Scalar g = self.grad(0, 0) / per_map;
    const Matrix<Scalar> sign = (a->value.data - b->value.data).array().sign().matrix();
    if (a->requires_grad) a->grad_buffer() += g * sign;
    if (b->requires_grad) b->grad_buffer() -= g * sign;
  });
}

inline constexpr double kLogClamp = 1e-7;

/// mean(-log s) with s clamped to [eps, 1 - eps]; `complement` uses 1 - s instead.
template <typename Scalar>
Var<Scalar> mean_neg_log(Var<Scalar> scores, bool complement) {
  const Scalar lo = static_cast<Scalar>(kLogClamp);
  const Scalar hi = Scalar(1) - lo;
  const Scalar count = Scalar(scores->value.data.size());
  const auto& s = scores->value.data;
  Scalar total = 0;
  for (Index i = 0; i < s.size(); ++i) {
    const Scalar c = std::clamp(s(i), lo, hi);
    total -= std::log(complement ? Scalar(1) - c : c);
  }
  return scores->tape->record(detail::scalar_tensor(total / count), scores->requires_grad, [=](Node<Scalar>& self) {
    const Scalar g = self.grad(0, 0) / count;
    Matrix<Scalar>& ds = scores->grad_buffer();
    const auto& sv = scores->value.data;
    for (Index i = 0; i < sv.size(); ++i) {
      if (sv(i) < lo || sv(i) > hi) continue;
      ds(i) += complement ? g / (Scalar(1) - sv(i)) : -g / sv(i);
    }
  });
}

/// sum_k w_k * term_k over scalar terms.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<std::pair<Var<Scalar>, double>>& terms) {
  if (terms.empty()) throw std::invalid_argument("weighted_sum needs at least one term");
  Scalar v = 0;
  bool grad = false;
  for (const auto& [t, w] : terms) {
    v += static_cast<Scalar>(w) * t->value.data(0, 0);
    grad = grad || t->requires_grad;
  }
  return terms.front().first->tape->record(detail::scalar_tensor(v), grad, [terms](Node<Scalar>& self) {
    for (const auto& [t, w] : terms)
      if (t->requires_grad) t->grad_buffer()(0, 0) += static_cast<Scalar>(w) * self.grad(0, 0);
  });
}

}  // namespace pona

#endif  // PONA_OPS_HPP
