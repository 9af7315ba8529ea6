// SPDX-License-Identifier: Apache-2.0
//
// Whole-run configuration as plain key=value text. Keys are prefixed
// "model.", "corpus." or "train."; unknown keys are rejected.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "voxadapt/corpus.hpp"
#include "voxadapt/model_config.hpp"
#include "voxadapt/pipeline.hpp"

namespace voxadapt {

struct RunConfig {
  ModelConfig model;
  CorpusSpec corpus;
  TrainSchedule train;

  /// Checks each part and their agreement (mel width, vocabulary, speakers).
  void validate() const;
  /// Full-size architecture and the 60k + 40k / 2000-step schedule.
  static RunConfig paper();
  /// Desk-scale run: h=32, 2+2 layers, 2000 pretraining steps.
  static RunConfig toy();
  /// Sets train.seed and corpus.seed.
  void override_seed(std::uint64_t seed);
};

std::map<std::string, std::string> to_key_values(const RunConfig& config);
/// Starts from the defaults (the paper preset) and applies every line.
RunConfig parse_run_config(std::string_view text);
std::string format_run_config(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace voxadapt
