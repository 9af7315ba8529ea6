// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/run_config.hpp"

#include "voxadapt/io.hpp"
#include "voxadapt/text_format.hpp"

namespace voxadapt {

void RunConfig::validate() const {
  model.validate();
  corpus.validate();
  train.validate();
  require(model.mel_dim == corpus.mel_dim, ErrorCode::kConfig,
          "model.mel_dim (" + std::to_string(model.mel_dim) + ") differs from corpus.mel_dim (" +
              std::to_string(corpus.mel_dim) + ")");
  require(model.phoneme_vocab == corpus.phoneme_vocab, ErrorCode::kConfig,
          "model.phoneme_vocab differs from corpus.phoneme_vocab");
  require(model.n_speakers == corpus.n_pretrain_speakers(), ErrorCode::kConfig,
          "model.n_speakers (" + std::to_string(model.n_speakers) +
              ") must equal corpus.n_speakers - corpus.n_adaptation_speakers (" +
              std::to_string(corpus.n_pretrain_speakers()) + ")");
}

RunConfig RunConfig::paper() {
  RunConfig c;
  c.model = ModelConfig::paper();
  return c;
}

RunConfig RunConfig::toy() {
  RunConfig c;
  c.model = ModelConfig::toy();
  c.corpus.mel_dim = c.model.mel_dim;
  c.corpus.phoneme_vocab = c.model.phoneme_vocab;
  c.train.phase1_steps = 1200;
  c.train.phase2_steps = 800;
  c.train.finetune_steps = 200;
  return c;
}

void RunConfig::override_seed(std::uint64_t seed) {
  train.seed = seed;
  corpus.seed = seed;
}

std::map<std::string, std::string> to_key_values(const RunConfig& c) {
  auto kv = to_key_values(c.model);
  kv.merge(to_key_values(c.corpus));
  kv.merge(to_key_values(c.train));
  return kv;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c = RunConfig::paper();
  for (const auto& [key, value] : parse_key_value_text(text)) {
    const bool known = apply_key_value(c.model, key, value) || apply_key_value(c.corpus, key, value) ||
                       apply_key_value(c.train, key, value);
    require(known, ErrorCode::kConfig, "unknown config key \"" + key + "\"");
  }
  c.validate();
  return c;
}

std::string format_run_config(const RunConfig& c) { return format_key_value_text(to_key_values(c)); }

RunConfig load_run_config(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

}  // namespace voxadapt
