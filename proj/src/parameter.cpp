// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/parameter.hpp"

#include <algorithm>

namespace voxadapt {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Parameter<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  require(!name.empty(), ErrorCode::kInvalidArgument, "parameter name must be non-empty");
  require(!contains(name), ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  Tensor<T> grad(value.shape());
  auto [it, ok] = params_.emplace(name, Parameter<T>{name, std::move(value), std::move(grad), trainable});
  return it->second;
}

template <typename T>
Parameter<T>& ParameterSet<T>::at(std::string_view name) {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::kOutOfRange, "unknown parameter " + std::string(name));
  return it->second;
}

template <typename T>
const Parameter<T>& ParameterSet<T>::at(std::string_view name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::kOutOfRange, "unknown parameter " + std::string(name));
  return it->second;
}

template <typename T>
void ParameterSet<T>::erase(std::string_view name) {
  auto it = params_.find(name);
  if (it != params_.end()) params_.erase(it);
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t ParameterSet<T>::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(T(0));
}

template <typename T>
void ParameterSet<T>::set_trainable(const std::function<bool(const std::string&)>& predicate) {
  for (auto& [name, p] : params_) p.trainable = predicate(name);
}

template <typename T>
std::vector<std::string> ParameterSet<T>::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

bool TrainabilityMask::matches(std::string_view name) const {
  const auto hit = [name](const std::string& pat) { return glob_match(pat, name); };
  return std::any_of(include.begin(), include.end(), hit) &&
         std::none_of(exclude.begin(), exclude.end(), hit);
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace voxadapt
