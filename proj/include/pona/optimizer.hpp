#ifndef PONA_OPTIMIZER_HPP
#define PONA_OPTIMIZER_HPP

#include "pona/autodiff.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace pona {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over every parameter of one or more stores.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<ParameterStore<Scalar>*> stores, AdamOptions options) : options_(options) {
    for (auto* store : stores)
      for (auto& p : store->parameters()) {
        params_.push_back(&p);
        m_.push_back(Matrix<Scalar>::Zero(p.rows, p.cols));
        v_.push_back(Matrix<Scalar>::Zero(p.rows, p.cols));
      }
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, double(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, double(steps_));
    const auto b1 = static_cast<Scalar>(options_.beta1);
    const auto b2 = static_cast<Scalar>(options_.beta2);
    const auto lr = static_cast<Scalar>(options_.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(options_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Matrix<Scalar>& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      params_[i]->value.array() -= lr * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  const AdamOptions& options() const { return options_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }

  const std::vector<Parameter<Scalar>*>& parameters() const { return params_; }
  std::vector<Matrix<Scalar>>& first_moments() { return m_; }
  std::vector<Matrix<Scalar>>& second_moments() { return v_; }
  const std::vector<Matrix<Scalar>>& first_moments() const { return m_; }
  const std::vector<Matrix<Scalar>>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::vector<Parameter<Scalar>*> params_;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
};

}  // namespace pona

#endif  // PONA_OPTIMIZER_HPP
