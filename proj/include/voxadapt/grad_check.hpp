// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <span>
#include <vector>

#include "voxadapt/autodiff.hpp"

namespace voxadapt {

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool passed = false;
  /// Input index or parameter name holding the worst coordinate.
  std::string worst;
};

/// Builds an output from the given input leaves on a fresh tape.
using GradClosure = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Compares reverse-mode gradients of closure with central finite differences
/// (step 1e-5) at 64-bit. A non-scalar output is reduced by a fixed
/// pseudo-random projection so that every output coordinate carries a
/// distinct upstream gradient. The error per coordinate is
/// |analytic - numeric| / max(1, |numeric|). The closure must be deterministic;
/// that is not detected.
GradCheckResult grad_check(const GradClosure& closure, const std::vector<Tensor<double>>& inputs,
                           double tol, std::uint64_t projection_seed = 0x5eed);

/// Builds an output from the parameters of a table on a fresh tape.
using ParamClosure = std::function<Var<double>(Tape<double>&, const ParameterSet<double>&)>;

/// The same check over every trainable coordinate of params. Parameter values
/// are restored and gradients zeroed before returning.
GradCheckResult grad_check_params(const ParamClosure& closure, ParameterSet<double>& params, double tol,
                                  std::uint64_t projection_seed = 0x5eed);

inline constexpr double kFiniteDifferenceStep = 1e-5;

}  // namespace voxadapt
