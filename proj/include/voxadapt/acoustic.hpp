// SPDX-License-Identifier: Apache-2.0
//
// Acoustic condition modeling at utterance and phoneme granularity.
//
// Training route: the utterance vector comes from the target mel, and the
// phoneme-level vectors from the target mel averaged within each phoneme's
// aligned frames. Inference route: the utterance vector comes from a reference
// utterance of the speaker and the phoneme-level vectors are predicted from
// the phoneme encoder output. Both routes meet in combine_conditions.
#pragma once

#include <optional>
#include <span>

#include "voxadapt/model_config.hpp"
#include "voxadapt/ops.hpp"
#include "voxadapt/parameter.hpp"

namespace voxadapt {

template <typename T>
void add_acoustic_params(ParameterSet<T>& params, const ModelConfig& config, Rng& rng);

/// Mean of the mel frames aligned to each phoneme, L x mel_dim. A phoneme
/// with zero frames gets a zero row.
template <typename T>
Var<T> phoneme_average(Var<T> mel, std::span<const int> durations);

template <typename T>
class AcousticConditioner {
 public:
  AcousticConditioner(const ModelConfig& config, const ParameterSet<T>& params);

  /// Strided conv stack + mean pool over time: one 1 x h vector per utterance.
  Var<T> utterance_encode(Var<T> mel, Rng* dropout) const;
  /// L x condition_dim vectors from phoneme-averaged mel.
  Var<T> phoneme_encode(Var<T> phoneme_mel, Rng* dropout) const;
  /// L x condition_dim vectors predicted from phoneme hiddens.
  Var<T> phoneme_predict(Var<T> phoneme_hiddens, Rng* dropout) const;
  /// Learned condition_dim x h projection applied before the addition.
  Var<T> projection(Tape<T>& tape) const;

 private:
  Var<T> conv_stack(Var<T> x, const std::string& prefix, std::size_t stride, Rng* dropout) const;
  Var<T> param(Tape<T>& tape, const std::string& name) const;

  const ModelConfig& config_;
  const ParameterSet<T>& params_;
};

/// hiddens + utterance (broadcast) + speaker (broadcast) + phoneme * projection.
/// Absent conditions contribute nothing.
template <typename T>
Var<T> combine_conditions(Var<T> hiddens, std::optional<Var<T>> utterance, std::optional<Var<T>> phoneme,
                          Var<T> speaker, std::optional<Var<T>> projection);

}  // namespace voxadapt
