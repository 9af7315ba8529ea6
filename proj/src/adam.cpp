// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/adam.hpp"

#include <cmath>

namespace voxadapt {

template <typename T>
AdamState<T> AdamState<T>::init(const ParameterSet<T>& params, AdamSettings settings) {
  AdamState<T> s;
  s.settings = settings;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    s.first_moment.emplace(name, Tensor<T>(p.value.shape()));
    s.second_moment.emplace(name, Tensor<T>(p.value.shape()));
  }
  return s;
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state) {
  const AdamSettings& cfg = state.settings;
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto m_it = state.first_moment.find(name);
    auto v_it = state.second_moment.find(name);
    require(m_it != state.first_moment.end() && v_it != state.second_moment.end(), ErrorCode::kState,
            "adam: no moment buffers for trainable parameter " + name);
    Tensor<T>& m = m_it->second;
    Tensor<T>& v = v_it->second;
    require_same_shape(m, p.value, "adam moments for " + name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T m_hat = m[i] * inv_c1;
      const T v_hat = v[i] * inv_c2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    require_finite(p.value, "adam update of " + name);
  }
  params.zero_grad();
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParameterSet<float>&, AdamState<float>&);
template void adam_step<double>(ParameterSet<double>&, AdamState<double>&);

}  // namespace voxadapt
