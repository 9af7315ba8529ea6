// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/model_config.hpp"

#include <functional>

#include "voxadapt/error.hpp"
#include "voxadapt/text_format.hpp"

namespace voxadapt {

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* what) {
    require(v > 0, ErrorCode::kConfig, std::string(what) + " must be positive");
  };
  positive(n_encoder_layers, "model.n_encoder_layers");
  positive(n_decoder_layers, "model.n_decoder_layers");
  positive(hidden, "model.hidden");
  positive(n_heads, "model.n_heads");
  positive(ffn_filter, "model.ffn_filter");
  positive(mel_dim, "model.mel_dim");
  positive(phoneme_vocab, "model.phoneme_vocab");
  positive(n_speakers, "model.n_speakers");
  positive(variance_filter, "model.variance_filter");
  positive(utterance_filter, "model.utterance_filter");
  positive(utterance_stride, "model.utterance_stride");
  positive(phoneme_filter, "model.phoneme_filter");
  positive(condition_dim, "model.condition_dim");
  require(hidden % n_heads == 0, ErrorCode::kConfig, "model.hidden must be divisible by model.n_heads");
  for (const int k : {ffn_kernel, variance_kernel, utterance_kernel, phoneme_kernel})
    require(k > 0 && k % 2 == 1, ErrorCode::kConfig, "convolution kernel widths must be odd");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kConfig, "model.dropout must be in [0, 1)");
  require(ln_eps >= 0.0, ErrorCode::kConfig, "model.ln_eps must be non-negative");
  require(speaker_embedding_scale > 0.0, ErrorCode::kConfig,
          "model.speaker_embedding_scale must be positive");
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.n_encoder_layers = 2;
  c.n_decoder_layers = 2;
  c.hidden = 32;
  c.n_heads = 2;
  c.ffn_filter = 64;
  c.ffn_kernel = 3;
  c.mel_dim = 40;
  c.phoneme_vocab = 24;
  c.n_speakers = 16;
  c.dropout = 0.0;
  c.variance_filter = 32;
  c.utterance_filter = 32;
  c.phoneme_filter = 32;
  return c;
}

namespace {

struct Field {
  const char* key;
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&)> set;
};

#define INT_FIELD(name) \
  Field { "model." #name, [](const ModelConfig& c) { return std::to_string(c.name); }, \
          [](ModelConfig& c, const std::string& v) { c.name = parse_int(v, "model." #name); } }
#define BOOL_FIELD(name) \
  Field { "model." #name, [](const ModelConfig& c) { return format_bool(c.name); }, \
          [](ModelConfig& c, const std::string& v) { c.name = parse_bool(v, "model." #name); } }
#define REAL_FIELD(name) \
  Field { "model." #name, [](const ModelConfig& c) { return format_real(c.name); }, \
          [](ModelConfig& c, const std::string& v) { c.name = parse_real(v, "model." #name); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      INT_FIELD(n_encoder_layers), INT_FIELD(n_decoder_layers), INT_FIELD(hidden),
      INT_FIELD(n_heads),          INT_FIELD(ffn_filter),       INT_FIELD(ffn_kernel),
      INT_FIELD(mel_dim),          INT_FIELD(phoneme_vocab),    INT_FIELD(n_speakers),
      REAL_FIELD(dropout),         REAL_FIELD(ln_eps),          BOOL_FIELD(cln_bias_enabled),
      INT_FIELD(variance_filter),  INT_FIELD(variance_kernel),  INT_FIELD(utterance_filter),
      INT_FIELD(utterance_kernel), INT_FIELD(utterance_stride), INT_FIELD(phoneme_filter),
      INT_FIELD(phoneme_kernel),   INT_FIELD(condition_dim),    BOOL_FIELD(use_utterance_condition),
      BOOL_FIELD(use_phoneme_condition), BOOL_FIELD(use_cln), REAL_FIELD(speaker_embedding_scale),
  };
  return all;
}

#undef INT_FIELD
#undef BOOL_FIELD
#undef REAL_FIELD

}  // namespace

std::map<std::string, std::string> to_key_values(const ModelConfig& config) {
  std::map<std::string, std::string> out;
  for (const Field& f : fields()) out.emplace(f.key, f.get(config));
  return out;
}

bool apply_key_value(ModelConfig& config, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return true;
    }
  }
  return false;
}

}  // namespace voxadapt
