// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>

#include "voxadapt/parameter.hpp"
#include "voxadapt/tensor.hpp"

namespace voxadapt {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Wengert list for reverse-mode differentiation. Every recorded value is
/// checked for NaN/Inf. Nodes are only differentiated when some leaf below
/// them requires a gradient, so frozen sub-graphs cost nothing in backward.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Constant that refers to caller-owned storage; it must outlive the tape.
  Var<T> borrow(const Tensor<T>& value);
  /// Leaf whose gradient is kept on the tape (read back with grad()).
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a parameter; differentiable iff the parameter is trainable.
  Var<T> parameter(const Parameter<T>& p);
  /// Same value, no gradient flows through.
  Var<T> detach(Var<T> v);

  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);
  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward);

  const Tensor<T>& value(Var<T> v) const { return node(v).value(); }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  /// Gradient buffer of v, allocated as zeros on first access.
  Tensor<T>& grad(Var<T> v);

  /// Reverse sweep from a scalar loss. Afterwards grad() holds d loss / d v for
  /// every differentiable node.
  void backward(Var<T> loss);
  /// backward(loss), then adds every parameter leaf's gradient into the
  /// matching entry of params.
  void backward(Var<T> loss, ParameterSet<T>& params);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    Tensor<T> grad;
    BackwardFn backward;
    const Parameter<T>* param = nullptr;
    bool requires_grad = false;

    const Tensor<T>& value() const { return borrowed ? *borrowed : owned; }
  };

  const Node& node(Var<T> v) const;
  Node& node(Var<T> v);
  Var<T> push(Node n);

  // deque keeps references to earlier nodes valid while new ones are added.
  std::deque<Node> nodes_;
  bool swept_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace voxadapt
