// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "voxadapt/tensor.hpp"

namespace voxadapt {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Named parameter table. Names are unique and iteration is in sorted
/// (byte-wise) name order, which is also the canonical serialization order.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value, bool trainable = true);

  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;
  void erase(std::string_view name);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  std::size_t trainable_scalar_count() const;

  void zero_grad();
  void set_trainable(const std::function<bool(const std::string&)>& predicate);
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, p] : params_) out.add(name, p.value.template cast<U>(), p.trainable);
    return out;
  }

 private:
  std::map<std::string, Parameter<T>, std::less<>> params_;
};

/// Shell-style pattern where '*' matches any run of characters (including '.').
bool glob_match(std::string_view pattern, std::string_view text);

/// Include/exclude glob lists deciding which parameters train in a stage.
struct TrainabilityMask {
  std::vector<std::string> include;
  std::vector<std::string> exclude;

  bool matches(std::string_view name) const;

  template <typename T>
  void apply(ParameterSet<T>& params) const {
    params.set_trainable([this](const std::string& n) { return matches(n); });
  }
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace voxadapt
