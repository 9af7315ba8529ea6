// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic multi-speaker corpus. A frame of phoneme p is
//
//   envelope (x) prototype[p] * gain * tilt(bin) * (1 + 0.2 sin(pitch_p * bin / mel_dim)) + noise
//
// so speaker (envelope, channel), utterance (gain, tilt) and phoneme (pitch)
// conditions are all present and recoverable.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxadapt/tensor.hpp"

namespace voxadapt {

struct CorpusSpec {
  /// Total speakers; the last n_adaptation_speakers are held out of pretraining.
  int n_speakers = 19;
  int n_adaptation_speakers = 3;
  int utterances_per_speaker = 30;
  int phoneme_vocab = 64;
  int min_phonemes = 4;
  int max_phonemes = 10;
  int mel_dim = 80;
  double noise = 0.02;
  std::uint64_t seed = 1;
  /// Adaptation utterances per adaptation speaker (taken from the front).
  int adaptation_utterances = 20;
  /// Held-out utterances per speaker (taken from the back).
  int holdout_utterances = 5;
  /// Amplitude of the pitch-dependent spectral ripple.
  double pitch_ripple = 0.2;

  int n_pretrain_speakers() const { return n_speakers - n_adaptation_speakers; }
  void validate() const;
};

std::map<std::string, std::string> to_key_values(const CorpusSpec& spec);
bool apply_key_value(CorpusSpec& spec, const std::string& key, const std::string& value);

struct SpeakerProfile {
  int index = 0;
  std::uint64_t seed = 0;
  /// Per-bin spectral envelope in [0.2, 1.0].
  std::vector<double> envelope;
  double base_pitch = 0.0;
  /// Multiplies phoneme durations; in [0.7, 1.3].
  double speaking_rate = 1.0;
  /// Recording channel shared by the speaker's utterances (jittered per utterance).
  double channel_gain = 1.0;
  double channel_tilt = 0.0;
};

struct SyntheticUtterance {
  int speaker = 0;
  int index = 0;
  std::vector<int> phonemes;
  std::vector<int> durations;
  std::vector<double> pitch;
  std::vector<double> energy;
  /// frames x mel_dim
  Tensor<float> mel;
  double gain = 1.0;
  double tilt = 0.0;

  int frames() const { return static_cast<int>(mel.rows()); }
};

/// vocab x mel_dim phoneme prototypes in [0.2, 1.0], shared by all speakers.
Tensor<double> phoneme_prototypes(const CorpusSpec& spec);

SpeakerProfile gen_speaker(const CorpusSpec& spec, int index);
SyntheticUtterance gen_utterance(const CorpusSpec& spec, const Tensor<double>& prototypes,
                                 const SpeakerProfile& profile, int utt_index);

struct Corpus {
  CorpusSpec spec;
  std::vector<SpeakerProfile> speakers;
  /// speaker-major: utterances[s * utterances_per_speaker + u]
  std::vector<SyntheticUtterance> utterances;

  const SyntheticUtterance& utterance(int speaker, int index) const;
  bool is_adaptation_speaker(int speaker) const;
  std::vector<int> adaptation_speakers() const;

  /// Training utterances of the pretraining speakers.
  std::vector<const SyntheticUtterance*> pretrain_set() const;
  /// Held-out utterances of the pretraining speakers.
  std::vector<const SyntheticUtterance*> pretrain_holdout() const;
  /// The first k utterances of an adaptation speaker (k <= adaptation_utterances).
  std::vector<const SyntheticUtterance*> adaptation_set(int speaker, int k) const;
  /// Held-out utterances of any speaker.
  std::vector<const SyntheticUtterance*> holdout_set(int speaker) const;
};

Corpus gen_corpus(const CorpusSpec& spec);

}  // namespace voxadapt
