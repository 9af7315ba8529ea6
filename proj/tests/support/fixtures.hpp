// SPDX-License-Identifier: Apache-2.0
//
// Random instances for format round-trip checks.
#pragma once

#include <cstdint>

#include "voxadapt/pipeline.hpp"

namespace voxadapt::testing {

/// Small random architecture, randomly initialised, with a few values
/// replaced by edge cases (signed zero, subnormal, extremes).
Checkpoint random_checkpoint(std::uint64_t seed);
/// Deployed parameters with random h, C and values.
DeployedSpeakerParams<float> random_deployed(std::uint64_t seed);

bool same_bits(const Tensor<float>& a, const Tensor<float>& b);
bool same_bits(const ParameterSet<float>& a, const ParameterSet<float>& b);
bool same_bits(const DeployedSpeakerParams<float>& a, const DeployedSpeakerParams<float>& b);

}  // namespace voxadapt::testing
