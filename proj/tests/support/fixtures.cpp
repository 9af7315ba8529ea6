// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <cstring>
#include <limits>

namespace voxadapt::testing {
namespace {

void sprinkle_edge_values(Tensor<float>& t, Rng& rng) {
  static const float kEdge[] = {-0.0f, std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::max(),
                                std::numeric_limits<float>::lowest(), 1e-38f};
  for (const float v : kEdge)
    if (rng.uniform() < 0.3) t[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(t.size()) - 1))] = v;
}

Tensor<float> random_row(Rng& rng, std::size_t n) {
  Tensor<float> t({1, n});
  for (float& v : t.storage()) v = static_cast<float>(rng.normal());
  sprinkle_edge_values(t, rng);
  return t;
}

}  // namespace

Checkpoint random_checkpoint(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "random_checkpoint"));
  ModelConfig c = ModelConfig::toy();
  c.n_heads = static_cast<int>(rng.uniform_int(1, 2));
  c.hidden = 2 * c.n_heads * static_cast<int>(rng.uniform_int(1, 4));
  c.n_encoder_layers = static_cast<int>(rng.uniform_int(1, 2));
  c.n_decoder_layers = static_cast<int>(rng.uniform_int(1, 3));
  c.ffn_filter = static_cast<int>(rng.uniform_int(2, 12));
  c.mel_dim = static_cast<int>(rng.uniform_int(1, 10));
  c.phoneme_vocab = static_cast<int>(rng.uniform_int(1, 9));
  c.n_speakers = static_cast<int>(rng.uniform_int(1, 4));
  c.variance_filter = c.utterance_filter = c.phoneme_filter = static_cast<int>(rng.uniform_int(1, 6));
  c.cln_bias_enabled = rng.uniform() < 0.3;
  c.dropout = rng.uniform(0.0, 0.5);
  Checkpoint ck{c, init_model_params<float>(c, rng.next_u64()), rng.next_u64(), static_cast<std::int64_t>(rng.uniform_int(0, 1 << 30))};
  for (auto& [name, p] : ck.params) sprinkle_edge_values(p.value, rng);
  return ck;
}

DeployedSpeakerParams<float> random_deployed(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "random_deployed"));
  const auto h = static_cast<std::size_t>(rng.uniform_int(1, 40));
  const auto sites = rng.uniform_int(1, 12);
  DeployedSpeakerParams<float> d;
  d.speaker = static_cast<int>(rng.uniform_int(0, 1000));
  for (std::int64_t c = 0; c < sites; ++c) {
    d.gammas.push_back(random_row(rng, h));
    d.betas.push_back(random_row(rng, h));
  }
  d.embedding = random_row(rng, h);
  return d;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

bool same_bits(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, p] : a)
    if (!b.contains(name) || !same_bits(p.value, b.at(name).value)) return false;
  return true;
}

bool same_bits(const DeployedSpeakerParams<float>& a, const DeployedSpeakerParams<float>& b) {
  if (a.gammas.size() != b.gammas.size() || a.betas.size() != b.betas.size()) return false;
  for (std::size_t c = 0; c < a.gammas.size(); ++c)
    if (!same_bits(a.gammas[c], b.gammas[c]) || !same_bits(a.betas[c], b.betas[c])) return false;
  return same_bits(a.embedding, b.embedding);
}

}  // namespace voxadapt::testing
