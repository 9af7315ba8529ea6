// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "voxadapt/error.hpp"
#include "voxadapt/random.hpp"
#include "voxadapt/text_format.hpp"

namespace voxadapt {

void CorpusSpec::validate() const {
  require(n_speakers >= 3, ErrorCode::kConfig, "corpus.n_speakers must be at least 3");
  require(n_adaptation_speakers >= 1 && n_adaptation_speakers <= n_speakers - 2, ErrorCode::kConfig,
          "corpus.n_adaptation_speakers must leave at least 2 pretraining speakers");
  require(phoneme_vocab > 0 && mel_dim > 0, ErrorCode::kConfig, "corpus vocab and mel_dim must be positive");
  require(min_phonemes >= 1 && max_phonemes >= min_phonemes, ErrorCode::kConfig,
          "corpus phoneme length range is invalid");
  require(noise >= 0.0, ErrorCode::kConfig, "corpus.noise must be non-negative");
  require(adaptation_utterances >= 1 && holdout_utterances >= 1, ErrorCode::kConfig,
          "corpus adaptation and holdout counts must be positive");
  require(utterances_per_speaker >= adaptation_utterances + holdout_utterances, ErrorCode::kConfig,
          "corpus.utterances_per_speaker (" + std::to_string(utterances_per_speaker) +
              ") is smaller than adaptation + holdout (" +
              std::to_string(adaptation_utterances + holdout_utterances) + ")");
}

namespace {

struct Field {
  const char* key;
  std::function<std::string(const CorpusSpec&)> get;
  std::function<void(CorpusSpec&, const std::string&)> set;
};

#define INT_FIELD(name) \
  Field { "corpus." #name, [](const CorpusSpec& c) { return std::to_string(c.name); }, \
          [](CorpusSpec& c, const std::string& v) { c.name = parse_int(v, "corpus." #name); } }
#define REAL_FIELD(name) \
  Field { "corpus." #name, [](const CorpusSpec& c) { return format_real(c.name); }, \
          [](CorpusSpec& c, const std::string& v) { c.name = parse_real(v, "corpus." #name); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      INT_FIELD(n_speakers),      INT_FIELD(n_adaptation_speakers), INT_FIELD(utterances_per_speaker),
      INT_FIELD(phoneme_vocab),   INT_FIELD(min_phonemes),          INT_FIELD(max_phonemes),
      INT_FIELD(mel_dim),         REAL_FIELD(noise),                INT_FIELD(adaptation_utterances),
      INT_FIELD(holdout_utterances), REAL_FIELD(pitch_ripple),
      Field{"corpus.seed", [](const CorpusSpec& c) { return std::to_string(c.seed); },
            [](CorpusSpec& c, const std::string& v) { c.seed = parse_u64(v, "corpus.seed"); }},
  };
  return all;
}

#undef INT_FIELD
#undef REAL_FIELD

}  // namespace

std::map<std::string, std::string> to_key_values(const CorpusSpec& spec) {
  std::map<std::string, std::string> out;
  for (const Field& f : fields()) out.emplace(f.key, f.get(spec));
  return out;
}

bool apply_key_value(CorpusSpec& spec, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(spec, value);
      return true;
    }
  }
  return false;
}

Tensor<double> phoneme_prototypes(const CorpusSpec& spec) {
  Rng rng(derive_seed(spec.seed, "prototypes"));
  Tensor<double> p = Tensor<double>::matrix(static_cast<std::size_t>(spec.phoneme_vocab),
                                            static_cast<std::size_t>(spec.mel_dim));
  for (double& v : p.storage()) v = rng.uniform(0.2, 1.0);
  return p;
}

SpeakerProfile gen_speaker(const CorpusSpec& spec, int index) {
  require(index >= 0 && index < spec.n_speakers, ErrorCode::kOutOfRange,
          "speaker index " + std::to_string(index) + " outside corpus of " + std::to_string(spec.n_speakers));
  SpeakerProfile s;
  s.index = index;
  s.seed = derive_seed(spec.seed, "speaker", static_cast<std::uint64_t>(index));
  Rng rng(s.seed);
  // Smooth random envelope: a few cosine partials around 0.6, clamped.
  constexpr int kPartials = 8;
  double amp[kPartials], phase[kPartials];
  for (int k = 0; k < kPartials; ++k) {
    amp[k] = rng.uniform(-0.25, 0.25) / std::sqrt(1.0 + 0.25 * k);
    phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const int bins = spec.mel_dim;
  s.envelope.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    const double x = bins > 1 ? static_cast<double>(b) / (bins - 1) : 0.0;
    double v = 0.6;
    for (int k = 0; k < kPartials; ++k) v += amp[k] * std::cos(std::numbers::pi * (k + 1) * x + phase[k]);
    s.envelope[static_cast<std::size_t>(b)] = std::clamp(v, 0.2, 1.0);
  }
  s.base_pitch = rng.uniform(2.0, 4.0);
  s.speaking_rate = rng.uniform(0.7, 1.3);
  s.channel_gain = std::exp(rng.normal(0.0, 0.2));
  s.channel_tilt = rng.uniform(-0.3, 0.3);
  return s;
}

SyntheticUtterance gen_utterance(const CorpusSpec& spec, const Tensor<double>& prototypes,
                                 const SpeakerProfile& profile, int utt_index) {
  require(prototypes.rank() == 2 && prototypes.rows() == static_cast<std::size_t>(spec.phoneme_vocab) &&
              prototypes.cols() == static_cast<std::size_t>(spec.mel_dim),
          ErrorCode::kShapeMismatch, "phoneme prototypes do not match the corpus spec");
  Rng rng(derive_seed(profile.seed, "utterance", static_cast<std::uint64_t>(utt_index)));
  SyntheticUtterance u;
  u.speaker = profile.index;
  u.index = utt_index;
  u.gain = profile.channel_gain * std::exp(rng.normal(0.0, 0.1));
  u.tilt = std::clamp(profile.channel_tilt + rng.normal(0.0, 0.12), -0.6, 0.6);

  const auto len = static_cast<std::size_t>(rng.uniform_int(spec.min_phonemes, spec.max_phonemes));
  for (std::size_t i = 0; i < len; ++i) {
    u.phonemes.push_back(static_cast<int>(rng.uniform_int(0, spec.phoneme_vocab - 1)));
    const double raw = static_cast<double>(rng.uniform_int(1, 8)) * profile.speaking_rate;
    u.durations.push_back(std::max(1, static_cast<int>(std::floor(raw + 0.5))));
    u.pitch.push_back(profile.base_pitch + rng.normal(0.0, 0.3));
  }

  int total = 0;
  for (const int d : u.durations) total += d;
  const auto bins = static_cast<std::size_t>(spec.mel_dim);
  u.mel = Tensor<float>::matrix(static_cast<std::size_t>(total), bins);
  std::size_t frame = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const auto p = static_cast<std::size_t>(u.phonemes[i]);
    double abs_sum = 0.0;
    for (int d = 0; d < u.durations[i]; ++d, ++frame) {
      for (std::size_t b = 0; b < bins; ++b) {
        const double x = bins > 1 ? static_cast<double>(b) / static_cast<double>(bins - 1) : 0.0;
        const double tilt = 1.0 + u.tilt * (2.0 * x - 1.0);
        const double ripple =
            1.0 + spec.pitch_ripple * std::sin(u.pitch[i] * static_cast<double>(b) / static_cast<double>(bins));
        const double clean = profile.envelope[b] * prototypes(p, b) * u.gain * tilt * ripple;
        const double noisy = spec.noise > 0.0 ? clean + spec.noise * rng.normal() : clean;
        const auto stored = static_cast<float>(noisy);
        u.mel(frame, b) = stored;
        abs_sum += std::abs(static_cast<double>(stored));
      }
    }
    u.energy.push_back(abs_sum / (static_cast<double>(u.durations[i]) * static_cast<double>(bins)));
  }
  return u;
}

Corpus gen_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus c;
  c.spec = spec;
  const Tensor<double> protos = phoneme_prototypes(spec);
  for (int s = 0; s < spec.n_speakers; ++s) {
    c.speakers.push_back(gen_speaker(spec, s));
    for (int u = 0; u < spec.utterances_per_speaker; ++u)
      c.utterances.push_back(gen_utterance(spec, protos, c.speakers.back(), u));
  }
  return c;
}

const SyntheticUtterance& Corpus::utterance(int speaker, int index) const {
  require(speaker >= 0 && speaker < spec.n_speakers && index >= 0 && index < spec.utterances_per_speaker,
          ErrorCode::kOutOfRange,
          "no utterance " + std::to_string(index) + " for speaker " + std::to_string(speaker));
  return utterances[static_cast<std::size_t>(speaker * spec.utterances_per_speaker + index)];
}

bool Corpus::is_adaptation_speaker(int speaker) const { return speaker >= spec.n_pretrain_speakers(); }

std::vector<int> Corpus::adaptation_speakers() const {
  std::vector<int> out;
  for (int s = spec.n_pretrain_speakers(); s < spec.n_speakers; ++s) out.push_back(s);
  return out;
}

std::vector<const SyntheticUtterance*> Corpus::pretrain_set() const {
  std::vector<const SyntheticUtterance*> out;
  const int train = spec.utterances_per_speaker - spec.holdout_utterances;
  for (int s = 0; s < spec.n_pretrain_speakers(); ++s)
    for (int u = 0; u < train; ++u) out.push_back(&utterance(s, u));
  return out;
}

std::vector<const SyntheticUtterance*> Corpus::pretrain_holdout() const {
  std::vector<const SyntheticUtterance*> out;
  for (int s = 0; s < spec.n_pretrain_speakers(); ++s)
    for (const auto* u : holdout_set(s)) out.push_back(u);
  return out;
}

std::vector<const SyntheticUtterance*> Corpus::adaptation_set(int speaker, int k) const {
  require(is_adaptation_speaker(speaker), ErrorCode::kInvalidArgument,
          "speaker " + std::to_string(speaker) + " is not an adaptation speaker");
  require(k >= 1 && k <= spec.adaptation_utterances, ErrorCode::kInvalidArgument,
          "adaptation size must be in [1, " + std::to_string(spec.adaptation_utterances) + "]");
  std::vector<const SyntheticUtterance*> out;
  for (int u = 0; u < k; ++u) out.push_back(&utterance(speaker, u));
  return out;
}

std::vector<const SyntheticUtterance*> Corpus::holdout_set(int speaker) const {
  std::vector<const SyntheticUtterance*> out;
  for (int u = spec.utterances_per_speaker - spec.holdout_utterances; u < spec.utterances_per_speaker; ++u)
    out.push_back(&utterance(speaker, u));
  return out;
}

}  // namespace voxadapt
