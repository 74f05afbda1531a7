#include "support.hpp"

#include "pona/layers.hpp"

#include <doctest.h>

using namespace pona;
using namespace pona::testing;

namespace {

// Central-difference gradient of f with respect to every entry of m.
template <typename F>
Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& m, F f, double h = 1e-6) {
  Eigen::MatrixXd g(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) {
      const double keep = m(i, j);
      m(i, j) = keep + h;
      const double up = f();
      m(i, j) = keep - h;
      const double down = f();
      m(i, j) = keep;
      g(i, j) = (up - down) / (2 * h);
    }
  return g;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-6) {
  double worst = 0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor}));
  return worst;
}

}  // namespace

TEST_CASE("conv2d matches direct convolution for several geometries") {
  const Tensor<double> x = random_tensor(Shape{2, 3, 7, 6}, 1);
  for (const ConvGeometry g : {ConvGeometry{3, 1, 1}, ConvGeometry{3, 2, 1}, ConvGeometry{1, 1, 0}}) {
    const Eigen::MatrixXd w = random_matrix(4, g.kernel * g.kernel * 3, 2);
    const Eigen::VectorXd b = random_matrix(4, 1, 3);
    Eigen::MatrixXd bm = b;
    Tape<double> tape(false);
    Var<double> y = conv2d<double>(tape.constant(x), w, &bm, nullptr, nullptr, g);
    const Tensor<double> ref = naive_conv(x, w, &b, 4, g.kernel, g.stride, g.padding);
    REQUIRE(y->shape() == ref.shape);
    CHECK((y->value.data - ref.data).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  ParameterStore<double> store(5);
  auto& w = store.gaussian("w", 2, 9 * 3, 0.3);
  auto& b = store.gaussian("b", 2, 1, 0.3);
  Tensor<double> x = random_tensor(Shape{2, 3, 5, 4}, 6);
  auto loss = [&](bool backward) {
    Tape<double> tape(true);
    Var<double> in = tape.variable(x);
    Var<double> out = mean_abs_diff(tanh(conv2d(in, w, &b, ConvGeometry{3, 2, 1})), tape.constant(Tensor<double>(Shape{2, 2, 3, 2})));
    if (backward) {
      store.zero_grad();
      tape.backward(out);
    }
    return std::make_pair(double(out->value.data(0, 0)), in->grad);
  };
  const auto [value, input_grad] = loss(true);
  (void)value;
  const Eigen::MatrixXd analytic_w = w.grad;
  const Eigen::MatrixXd numeric_w = numeric_gradient(w.value, [&] { return loss(false).first; });
  CHECK(max_rel(analytic_w, numeric_w) < 1e-5);
  const Eigen::MatrixXd numeric_x = numeric_gradient(x.data, [&] { return loss(false).first; });
  CHECK(max_rel(input_grad, numeric_x) < 1e-5);
}

TEST_CASE("batch and instance normalization standardize and backpropagate") {
  for (NormKind kind : {NormKind::batch, NormKind::instance}) {
    ParameterStore<double> store(7);
    auto norm = Norm<double>::create(store, "n", 3, kind);
    Tensor<double> x = random_tensor(Shape{2, 3, 4, 4}, 8, -2, 3);
    Tape<double> tape(false);
    Var<double> y = norm(tape.constant(x));
    // Statistics over (batch, pixels) or per-sample pixels.
    const Index groups = kind == NormKind::batch ? 1 : 2;
    const Index width = y->value.data.cols() / groups;
    for (Index g = 0; g < groups; ++g)
      for (Index c = 0; c < 3; ++c) {
        const auto row = y->value.data.row(c).segment(g * width, width);
        CHECK(std::abs(row.mean()) < 1e-10);
        CHECK(std::abs((row.array() - row.mean()).square().mean() - 1.0) < 1e-3);
      }

    auto f = [&] {
      Tape<double> t(true);
      return double(mean_abs_diff(tanh(norm(t.constant(x))), t.constant(Tensor<double>(x.shape)))->value.data(0, 0));
    };
    Tape<double> t(true);
    Var<double> out = mean_abs_diff(tanh(norm(t.constant(x))), t.constant(Tensor<double>(x.shape)));
    store.zero_grad();
    t.backward(out);
    const Eigen::MatrixXd analytic = norm.scale->grad;
    CHECK(max_rel(analytic, numeric_gradient(norm.scale->value, f)) < 1e-5);
  }
}

TEST_CASE("batch normalization uses running statistics in evaluation mode") {
  ParameterStore<double> store(9);
  auto norm = Norm<double>::create(store, "n", 2, NormKind::batch);
  const Tensor<double> x = random_tensor(Shape{4, 2, 3, 3}, 10, 1, 2);
  {
    Tape<double> tape(false);
    norm(tape.constant(x));
  }
  REQUIRE(norm.running_mean->value(0, 0) != 0.0);
  store.set_training(false);
  Tape<double> tape(false);
  Var<double> y = norm(tape.constant(x));
  const double rm = norm.running_mean->value(0, 0);
  const double rv = norm.running_var->value(0, 0);
  CHECK(y->value.data(0, 0) == doctest::Approx((x.data(0, 0) - rm) / std::sqrt(rv + 1e-5)).epsilon(1e-12));
}

TEST_CASE("nearest upsampling repeats pixels and sums gradients back") {
  Tensor<double> x = random_tensor(Shape{1, 2, 2, 3}, 11, 0.5, 1.0);
  Tape<double> tape(true);
  Var<double> in = tape.variable(x);
  Var<double> up = upsample_nearest(in, 2);
  REQUIRE(up->shape() == Shape{1, 2, 4, 6});
  for (Index y = 0; y < 4; ++y)
    for (Index xx = 0; xx < 6; ++xx) CHECK(up->value(0, 1, y, xx) == x(0, 1, y / 2, xx / 2));
  tape.backward(mean_abs_diff(up, tape.constant(Tensor<double>(up->shape()))));
  // Each input feeds four of the 48 positive outputs.
  CHECK((in->grad.array() - 4.0 / 48.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("softmax attention weights are column-normalized on the tape") {
  Tape<double> tape(false);
  Var<double> k = tape.constant(random_tensor(Shape{2, 3, 2, 3}, 12));
  Var<double> q = tape.constant(random_tensor(Shape{2, 3, 2, 3}, 13));
  Var<double> a = attention_weights(k, q);
  REQUIRE(a->shape() == Shape{2, 6, 1, 6});
  const Eigen::ArrayXd sums = a->value.data.colwise().sum().transpose().array();
  CHECK((sums - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("mean_neg_log clamps saturated scores") {
  Tape<double> tape(false);
  Tensor<double> ones(Shape{2, 1, 1, 1});
  ones.data.setConstant(1.0);
  const double v = mean_neg_log(tape.constant(ones), true)->value.data(0, 0);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(kLogClamp)).epsilon(1e-9));
}

TEST_CASE("parameter stores reject duplicate names and count shapes without allocating") {
  ParameterStore<float> store(1);
  store.gaussian("a", 2, 3, 0.1);
  CHECK_THROWS_AS(store.constant("a", 1, 1, 0.f), std::logic_error);
  ParameterStore<float> shapes(1, ParameterStore<float>::Allocation::shape_only);
  shapes.gaussian("big", 1000, 1000, 0.1);
  CHECK(shapes.parameter_count() == 1000000);
  CHECK(shapes.parameters().front().value.size() == 0);
}
