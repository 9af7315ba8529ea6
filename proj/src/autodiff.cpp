// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/autodiff.hpp"

namespace voxadapt {

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const {
  require(v.tape == this && v.id < nodes_.size(), ErrorCode::kState,
          "variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var<T> v) {
  require(v.tape == this && v.id < nodes_.size(), ErrorCode::kState,
          "variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
Var<T> Tape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  require_finite(value, "constant");
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::borrow(const Tensor<T>& value) {
  Node n;
  n.borrowed = &value;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  require_finite(value, "variable");
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(const Parameter<T>& p) {
  Node n;
  n.borrowed = &p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::detach(Var<T> v) {
  Node n;
  n.borrowed = &node(v).value();
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                       BackwardFn backward) {
  require_finite(value, std::string(op));
  Node n;
  n.owned = std::move(value);
  for (const Var<T>& in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var<T> v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value().shape()) n.grad = Tensor<T>(n.value().shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  require(!nodes_.empty() && loss.tape == this && loss.id < nodes_.size(), ErrorCode::kState,
          "backward called without a recorded forward pass");
  require(!swept_, ErrorCode::kState, "backward already ran on this tape");
  const Tensor<T>& lv = value(loss);
  require(lv.size() == 1, ErrorCode::kShapeMismatch,
          "backward needs a scalar loss, got " + shape_string(lv.shape()));
  swept_ = true;
  if (!requires_grad(loss)) return;
  grad(loss)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this);
  }
}

template <typename T>
void Tape<T>::backward(Var<T> loss, ParameterSet<T>& params) {
  backward(loss);
  for (const Node& n : nodes_) {
    if (!n.param || !n.requires_grad || n.grad.empty()) continue;
    Parameter<T>& p = params.at(n.param->name);
    require_same_shape(p.grad, n.grad, "gradient for " + p.name);
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace voxadapt
