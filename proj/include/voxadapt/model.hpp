// SPDX-License-Identifier: Apache-2.0
//
// Non-autoregressive backbone: phoneme encoder (plain layer norm), variance
// adaptor, and a mel decoder whose every normalization site is a conditional
// layer norm driven by the speaker embedding.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxadapt/model_config.hpp"
#include "voxadapt/ops.hpp"
#include "voxadapt/parameter.hpp"

namespace voxadapt {

std::string speaker_embedding_name(int speaker);
/// Parameter-name prefix of conditional norm site c: two per decoder layer
/// (after attention, after feed-forward) then the final one.
std::string cln_site_prefix(const ModelConfig& config, int site);

/// Per-speaker inference parameters: gamma_c and beta_c for each conditional
/// norm site plus the speaker embedding, 2hC + h scalars.
template <typename T>
struct DeployedSpeakerParams {
  int speaker = -1;
  std::vector<Tensor<T>> gammas;
  std::vector<Tensor<T>> betas;
  Tensor<T> embedding;

  std::size_t scalar_count() const;
};

/// How the decoder receives speaker information: either the embedding, from
/// which gamma/beta are computed through the conditional matrices, or
/// precomputed gamma/beta vectors.
template <typename T>
struct SpeakerCondition {
  std::optional<Var<T>> embedding;
  const DeployedSpeakerParams<T>* deployed = nullptr;

  static SpeakerCondition from_embedding(Var<T> e) { return {e, nullptr}; }
  static SpeakerCondition from_deployed(const DeployedSpeakerParams<T>& d) { return {std::nullopt, &d}; }
};

/// Per-phoneme variance predictions, each L x 1. Duration is log(1 + frames).
template <typename T>
struct VariancePrediction {
  Var<T> log_duration;
  Var<T> pitch;
  Var<T> energy;
};

/// Weights shared by every shape of the model, initialised from one seed.
template <typename T>
ParameterSet<T> init_model_params(const ModelConfig& config, std::uint64_t seed);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng);

/// Fixed sinusoidal position table, len x h.
template <typename T>
Tensor<T> sinusoid_positions(std::size_t len, std::size_t h);

/// Frames per phoneme from predicted log(1 + frames): round half up of
/// exp(x) - 1, clamped at 0.
template <typename T>
std::vector<int> durations_from_log(const Tensor<T>& log_duration);

/// Each hidden row repeated durations[i] times; zero-duration rows are dropped.
template <typename T>
Var<T> length_regulate(Var<T> hiddens, std::span<const int> durations);

/// Read-only view binding a config to a parameter table.
template <typename T>
class Backbone {
 public:
  Backbone(const ModelConfig& config, const ParameterSet<T>& params);

  const ModelConfig& config() const { return config_; }
  const ParameterSet<T>& params() const { return params_; }

  /// Tape leaf for the named parameter.
  Var<T> param(Tape<T>& tape, std::string_view name) const;

  Var<T> encode_phonemes(Tape<T>& tape, std::span<const int> phonemes, Rng* dropout) const;
  VariancePrediction<T> predict_variances(Var<T> hiddens, Rng* dropout) const;
  /// hiddens + pitch * w_pitch + energy * w_energy with pitch, energy L x 1.
  Var<T> embed_variances(Var<T> hiddens, Var<T> pitch, Var<T> energy) const;
  Var<T> decode_mel(Var<T> frames, const SpeakerCondition<T>& speaker, Rng* dropout) const;

  Var<T> speaker_embedding(Tape<T>& tape, int speaker) const;
  /// gamma/beta of conditional norm site c for condition vector e.
  ops::ConditionalScaleBias<T> cln_scale_bias(int site, Var<T> e) const;

 private:
  Var<T> attention(Var<T> x, const std::string& prefix) const;
  Var<T> feed_forward(Var<T> x, const std::string& prefix, Rng* dropout) const;
  Var<T> variance_predictor(Var<T> x, const std::string& prefix, Rng* dropout) const;
  Var<T> norm_site(Var<T> x, int site, const std::string& plain_prefix,
                   const SpeakerCondition<T>& speaker) const;

  const ModelConfig& config_;
  const ParameterSet<T>& params_;
};

enum class CountScope { kFinetuned, kDeployed, kTotal };

/// Parameters trained during adaptation to one speaker: every conditional
/// matrix (and bias, when enabled) plus that speaker's embedding.
TrainabilityMask finetune_mask(const ModelConfig& config, int speaker);

/// Walks an actual parameter table. kFinetuned applies finetune_mask for
/// speaker; kDeployed exports that speaker and counts what was exported.
template <typename T>
std::size_t count_params(const ModelConfig& config, const ParameterSet<T>& params, CountScope scope,
                         int speaker);
/// Builds a freshly initialised table for config and walks it.
std::size_t count_params(const ModelConfig& config, CountScope scope);

/// gamma_c = E_s W_c^gamma, beta_c = E_s W_c^beta for every site, computed
/// with exactly the operations decode_mel uses in embedding mode.
template <typename T>
DeployedSpeakerParams<T> export_speaker(const ModelConfig& config, const ParameterSet<T>& params,
                                        int speaker);

}  // namespace voxadapt
