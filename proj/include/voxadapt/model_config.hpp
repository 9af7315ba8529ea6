// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace voxadapt {

/// Architecture hyperparameters for the backbone, the acoustic condition
/// networks and the conditional layer norms.
struct ModelConfig {
  int n_encoder_layers = 4;
  int n_decoder_layers = 4;
  int hidden = 256;
  int n_heads = 2;
  int ffn_filter = 1024;
  int ffn_kernel = 9;
  int mel_dim = 80;
  int phoneme_vocab = 64;
  /// Source speakers present at pretraining; they get ids 0..n_speakers-1.
  int n_speakers = 16;
  double dropout = 0.1;
  double ln_eps = 1e-5;
  /// Adds b_gamma (init 1) and b_beta (init 0) to every conditional norm.
  bool cln_bias_enabled = false;

  int variance_filter = 256;
  int variance_kernel = 3;

  int utterance_filter = 256;
  int utterance_kernel = 5;
  int utterance_stride = 3;
  int phoneme_filter = 256;
  int phoneme_kernel = 3;
  int condition_dim = 4;

  /// Ablation switches.
  bool use_utterance_condition = true;
  bool use_phoneme_condition = true;
  bool use_cln = true;

  /// Typical magnitude of an initial speaker-embedding coordinate.
  double speaker_embedding_scale = 0.5;

  /// Number of conditional layer norm sites: two per decoder layer plus the
  /// final one.
  int cln_sites() const { return 2 * n_decoder_layers + 1; }

  void validate() const;

  /// Architecture reported for the full-size system: 4+4 layers, h=256,
  /// 2 heads, FFN filter 1024 with kernel 9, 80 mel bins.
  static ModelConfig paper();
  /// Desk-scale configuration used by the training tests.
  static ModelConfig toy();
};

/// key=value view (keys prefixed "model.") used by config files and checkpoints.
std::map<std::string, std::string> to_key_values(const ModelConfig& config);
/// Applies recognised "model." keys; returns false for a key it does not own.
bool apply_key_value(ModelConfig& config, const std::string& key, const std::string& value);

}  // namespace voxadapt
