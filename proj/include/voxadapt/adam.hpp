// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "voxadapt/parameter.hpp"

namespace voxadapt {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

template <typename T>
struct AdamState {
  AdamSettings settings;
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>, std::less<>> first_moment;
  std::map<std::string, Tensor<T>, std::less<>> second_moment;

  /// Zeroed moments for every trainable parameter of params.
  static AdamState init(const ParameterSet<T>& params, AdamSettings settings);
};

/// Bias-corrected Adam update of every trainable parameter, then zeroes all
/// gradients. Throws if a trainable parameter has no moment buffers.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace voxadapt
