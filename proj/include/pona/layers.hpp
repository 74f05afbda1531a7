#ifndef PONA_LAYERS_HPP
#define PONA_LAYERS_HPP

#include "pona/attention.hpp"

#include <string>

namespace pona {

inline constexpr double kInitStd = 0.02;

template <typename Scalar>
struct Conv2d {
  Parameter<Scalar>* weight = nullptr;
  Parameter<Scalar>* bias = nullptr;
  ConvGeometry geometry;

  static Conv2d create(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out,
                       ConvGeometry geometry, bool with_bias = true) {
    Conv2d c;
    c.geometry = geometry;
    c.weight = &store.gaussian(name + ".weight", out, geometry.kernel * geometry.kernel * in, kInitStd);
    if (with_bias) c.bias = &store.constant(name + ".bias", out, 1, Scalar(0));
    return c;
  }

  Var<Scalar> operator()(Var<Scalar> x) const { return conv2d(x, *weight, bias, geometry); }
};

template <typename Scalar>
struct Norm {
  Parameter<Scalar>* scale = nullptr;
  Parameter<Scalar>* shift = nullptr;
  Buffer<Scalar>* running_mean = nullptr;
  Buffer<Scalar>* running_var = nullptr;
  NormKind kind = NormKind::instance;
  const ParameterStore<Scalar>* store = nullptr;

  static Norm create(ParameterStore<Scalar>& store, const std::string& name, Index channels, NormKind kind) {
    Norm n;
    n.kind = kind;
    n.store = &store;
    n.scale = &store.constant(name + ".scale", channels, 1, Scalar(1));
    n.shift = &store.constant(name + ".shift", channels, 1, Scalar(0));
    if (kind == NormKind::batch) {
      n.running_mean = &store.buffer(name + ".running_mean", channels, 1, Scalar(0));
      n.running_var = &store.buffer(name + ".running_var", channels, 1, Scalar(1));
    }
    return n;
  }

  Var<Scalar> operator()(Var<Scalar> x) const {
    NormOptions opt;
    opt.kind = kind;
    opt.training = store->training();
    return normalize(x, *scale, *shift, running_mean ? &running_mean->value : nullptr,
                     running_var ? &running_var->value : nullptr, opt);
  }
};

enum class Activation { relu, leaky_relu };

/// convolution -> normalization -> activation.
template <typename Scalar>
struct ConvUnit {
  Conv2d<Scalar> conv;
  Norm<Scalar> norm;
  Activation activation = Activation::relu;
  double slope = 0.2;

  static ConvUnit create(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out,
                         ConvGeometry geometry, NormKind norm_kind, Activation activation = Activation::relu,
                         double slope = 0.2) {
    ConvUnit u;
    u.conv = Conv2d<Scalar>::create(store, name + ".conv", in, out, geometry);
    u.norm = Norm<Scalar>::create(store, name + ".norm", out, norm_kind);
    u.activation = activation;
    u.slope = slope;
    return u;
  }

  Var<Scalar> operator()(Var<Scalar> x) const {
    Var<Scalar> y = norm(conv(x));
    return activation == Activation::relu ? relu(y) : leaky_relu(y, slope);
  }
};

inline constexpr ConvGeometry kSame3x3{3, 1, 1};
inline constexpr ConvGeometry kDown3x3{3, 2, 1};

}  // namespace pona

#endif  // PONA_LAYERS_HPP
