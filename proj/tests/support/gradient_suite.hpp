// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient checks for every differentiable kernel and
// module, shared by the unit tests and the acceptance runner.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxadapt/corpus.hpp"
#include "voxadapt/model_config.hpp"

namespace voxadapt::testing {

struct SuiteEntry {
  std::string name;
  int seeds = 0;
  double tol = 0.0;
  double max_rel_error = 0.0;
  std::string worst;

  bool passed() const { return max_rel_error <= tol; }
};

/// h=4, 1+1 layers, conv filters 8, 3 mel bins, 5 phonemes, 2 speakers, no dropout.
ModelConfig tiny_model_config();
/// L=3 phonemes over T=5 frames with random mel, pitch and energy.
SyntheticUtterance tiny_utterance(const ModelConfig& config, std::uint64_t seed, int speaker);

/// Every kernel and module, each over `seeds` random draws, tolerance 1e-4.
std::vector<SuiteEntry> run_gradient_suite(int seeds);
/// Whole-model check of every parameter on the tiny config against the
/// phase-1 and phase-2 total losses, tolerance 1e-3.
SuiteEntry run_full_model_check(int seeds);

}  // namespace voxadapt::testing
