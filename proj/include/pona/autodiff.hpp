#ifndef PONA_AUTODIFF_HPP
#define PONA_AUTODIFF_HPP

#include "pona/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace pona {

/// A named learnable array. `grad` accumulates until zero_grad().
template <typename Scalar>
struct Parameter {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Index size() const { return rows * cols; }
  void zero_grad() { grad.setZero(rows, cols); }
};

/// Non-learned persistent state (normalization running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  Matrix<Scalar> value;
};

/// Owns every parameter and buffer of one model, in registration order. In shape-only mode
/// nothing is allocated, which lets parameter counts be taken at full scale for free.
template <typename Scalar>
class ParameterStore {
 public:
  enum class Allocation { full, shape_only };

  explicit ParameterStore(std::uint64_t seed, Allocation allocation = Allocation::full)
      : rng_(seed), allocation_(allocation) {}

  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<Scalar>& gaussian(const std::string& name, Index rows, Index cols, double stddev, double mean = 0.0) {
    auto& p = add(name, rows, cols);
    if (allocated()) {
      std::normal_distribution<double> dist(mean, stddev);
      for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) p.value(i, j) = static_cast<Scalar>(dist(rng_));
    }
    return p;
  }

  Parameter<Scalar>& constant(const std::string& name, Index rows, Index cols, Scalar v) {
    auto& p = add(name, rows, cols);
    if (allocated()) p.value.setConstant(v);
    return p;
  }

  Buffer<Scalar>& buffer(const std::string& name, Index rows, Index cols, Scalar v) {
    buffers_.push_back({name, allocated() ? Matrix<Scalar>::Constant(rows, cols, v) : Matrix<Scalar>()});
    return buffers_.back();
  }

  bool allocated() const { return allocation_ == Allocation::full; }

  std::deque<Parameter<Scalar>>& parameters() { return params_; }
  const std::deque<Parameter<Scalar>>& parameters() const { return params_; }
  std::deque<Buffer<Scalar>>& buffers() { return buffers_; }
  const std::deque<Buffer<Scalar>>& buffers() const { return buffers_; }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

 private:
  Parameter<Scalar>& add(const std::string& name, Index rows, Index cols) {
    for (const auto& p : params_)
      if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    Parameter<Scalar> p;
    p.name = name;
    p.rows = rows;
    p.cols = cols;
    if (allocated()) {
      p.value.setZero(rows, cols);
      p.grad.setZero(rows, cols);
    }
    params_.push_back(std::move(p));
    return params_.back();
  }

  std::mt19937_64 rng_;
  Allocation allocation_;
  bool training_ = true;
  std::deque<Parameter<Scalar>> params_;
  std::deque<Buffer<Scalar>> buffers_;
};

/// Restores a store's training flag on scope exit.
template <typename Scalar>
class ModeGuard {
 public:
  ModeGuard(ParameterStore<Scalar>& store, bool training) : store_(store), previous_(store.training()) {
    store_.set_training(training);
  }
  ~ModeGuard() { store_.set_training(previous_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  ParameterStore<Scalar>& store_;
  bool previous_;
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Matrix<Scalar> grad;  // empty until reached by backward()
  bool requires_grad = false;
  Tape<Scalar>* tape = nullptr;

  const Shape& shape() const { return value.shape; }

  Matrix<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad.setZero(value.data.rows(), value.data.cols());
    return grad;
  }
};

template <typename Scalar>
using Var = Node<Scalar>*;

// Reverse-mode recording of one forward pass. Nodes live in a deque so Var pointers stay
// valid for the tape's lifetime; backward closures run in reverse recording order.
template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Node<Scalar>&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), false); }

  /// A leaf whose gradient is wanted (inputs under a gradient check).
  Var<Scalar> variable(Tensor<Scalar> value) { return push(std::move(value), grad_enabled_); }

  Var<Scalar> record(Tensor<Scalar> value, bool requires_grad, Backward backward) {
    Var<Scalar> node = push(std::move(value), requires_grad && grad_enabled_);
    if (node->requires_grad) backward_.emplace_back(node, std::move(backward));
    return node;
  }

  /// Seeds d(output)/d(output) = 1 and propagates. `output` must hold one element.
  void backward(Var<Scalar> output) {
    if (output->value.data.size() != 1) throw ShapeError("backward() needs a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!output->requires_grad) return;
    output->grad_buffer().setOnes();
    for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) {
      if (it->first->grad.size() != 0) it->second(*it->first);
    }
  }

 private:
  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad) {
    nodes_.emplace_back();
    Node<Scalar>& n = nodes_.back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.tape = this;
    return &n;
  }

  bool grad_enabled_;
  std::deque<Node<Scalar>> nodes_;
  std::vector<std::pair<Node<Scalar>*, Backward>> backward_;
};

}  // namespace pona

#endif  // PONA_AUTODIFF_HPP
