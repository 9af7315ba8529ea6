// SPDX-License-Identifier: Apache-2.0
//
// Two-phase pretraining, masked speaker adaptation, deployment export and
// inference over the synthetic corpus.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxadapt/adam.hpp"
#include "voxadapt/corpus.hpp"
#include "voxadapt/model.hpp"

namespace voxadapt {

struct TrainSchedule {
  int phase1_steps = 60000;
  int phase2_steps = 40000;
  /// Utterances per optimizer step.
  int batch_size = 8;
  double learning_rate = 1e-3;
  int finetune_steps = 2000;
  /// Defaults to a tenth of the pretraining rate, held constant.
  double finetune_learning_rate = 1e-4;
  /// Drives model init, batch order and dropout.
  std::uint64_t seed = 1;

  void validate() const;
};

std::map<std::string, std::string> to_key_values(const TrainSchedule& schedule);
bool apply_key_value(TrainSchedule& schedule, const std::string& key, const std::string& value);

enum class LossMode { kPhase1, kPhase2, kFinetune };

/// Parameter patterns trained in each pretraining phase.
TrainabilityMask pretrain_mask(LossMode mode);

template <typename T>
struct LossTerms {
  Var<T> mel;
  Var<T> duration;
  Var<T> pitch;
  Var<T> energy;
  /// Present in kPhase2 and kFinetune.
  std::optional<Var<T>> predictor;
  Var<T> total;
};

/// Teacher-forced training route on one utterance, labelled with the model
/// speaker id u.speaker. Throws kNonFinite naming the offending component.
template <typename T>
LossTerms<T> compute_losses(Tape<T>& tape, const ModelConfig& config, const ParameterSet<T>& params,
                            const SyntheticUtterance& u, LossMode mode, Rng* dropout);

struct LossRecord {
  int step = 0;
  int phase = 0;
  double mel = 0.0;
  double duration = 0.0;
  double pitch = 0.0;
  double energy = 0.0;
  double predictor = 0.0;
  double total = 0.0;
};

using UtteranceSet = std::vector<const SyntheticUtterance*>;
using StepCallback = std::function<void(const LossRecord&)>;

struct Checkpoint {
  ModelConfig config;
  ParameterSet<float> params;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

/// Phase 1 trains everything except the phoneme-level predictor; phase 2
/// trains everything, the predictor against a stopped-gradient label.
Checkpoint pretrain(const ModelConfig& config, const TrainSchedule& schedule, const UtteranceSet& train,
                    const StepCallback& on_step = {});

struct FinetuneResult {
  /// Checkpoint parameters plus the initialised new speaker embedding.
  ParameterSet<float> start;
  ParameterSet<float> adapted;
  /// adapted - start for every finetuned parameter.
  ParameterSet<float> delta;
};

/// Adds an embedding for speaker (mean of the existing ones) when absent and
/// trains only finetune_mask(config, speaker) on the adaptation utterances.
FinetuneResult finetune(const Checkpoint& checkpoint, int speaker, const UtteranceSet& adaptation,
                        const TrainSchedule& schedule, const StepCallback& on_step = {});

/// Mean of every speaker_embedding.* entry.
template <typename T>
Tensor<T> mean_speaker_embedding(const ParameterSet<T>& params);

/// Speaker information for inference: deployed vectors, or the embedding
/// and conditional matrices of speaker in the parameter table.
template <typename T>
struct InferSpeaker {
  int speaker = -1;
  const DeployedSpeakerParams<T>* deployed = nullptr;
};

/// Free-running synthesis: reference utterance vector, predicted phoneme
/// conditions, predicted durations/pitch/energy.
template <typename T>
Tensor<T> infer(const ModelConfig& config, const ParameterSet<T>& params, const InferSpeaker<T>& speaker,
                std::span<const int> phonemes, const Tensor<T>* reference_mel,
                std::vector<int>* predicted_durations = nullptr);

/// Nearest-frame resampling of pred to target_frames rows.
template <typename T>
Tensor<T> resample_frames(const Tensor<T>& pred, std::size_t target_frames);

struct SpeakerMetrics {
  int speaker = -1;
  int utterances = 0;
  double teacher_forced_mse = 0.0;
  double free_running_mse = 0.0;
  double duration_accuracy = 0.0;
};

struct EvalReport {
  std::vector<SpeakerMetrics> speakers;
  SpeakerMetrics overall;
};

struct EvalOptions {
  /// Deployed parameters per speaker; speakers absent here use the table.
  const std::map<int, DeployedSpeakerParams<float>>* deployed = nullptr;
  /// Reference utterance per speaker for the utterance vector. Required when
  /// the model uses utterance-level conditions.
  const std::map<int, const SyntheticUtterance*>* references = nullptr;
};

EvalReport evaluate(const ModelConfig& config, const ParameterSet<float>& params, const UtteranceSet& testset,
                    const EvalOptions& options = {});

}  // namespace voxadapt
