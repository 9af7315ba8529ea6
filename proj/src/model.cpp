// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/model.hpp"

#include <cmath>
#include <cstdio>

#include "voxadapt/acoustic.hpp"

namespace voxadapt {

std::string speaker_embedding_name(int speaker) {
  require(speaker >= 0, ErrorCode::kOutOfRange, "negative speaker id");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "speaker_embedding.%04d", speaker);
  return buf;
}

std::string cln_site_prefix(const ModelConfig& config, int site) {
  const int sites = config.cln_sites();
  require(site >= 0 && site < sites, ErrorCode::kOutOfRange,
          "conditional norm site " + std::to_string(site) + " outside [0, " + std::to_string(sites) + ")");
  const char* kind = config.use_cln ? "cln" : "ln";
  if (site == sites - 1) return std::string("decoder.") + kind + "_final";
  return "decoder.layer" + std::to_string(site / 2) + "." + kind + (site % 2 == 0 ? "_attn" : "_ffn");
}

template <typename T>
std::size_t DeployedSpeakerParams<T>::scalar_count() const {
  std::size_t n = embedding.size();
  for (const auto& g : gammas) n += g.size();
  for (const auto& b : betas) n += b.size();
  return n;
}

template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (T& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> sinusoid_positions(std::size_t len, std::size_t h) {
  Tensor<T> pe = Tensor<T>::matrix(len, h);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < h; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(h));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
std::vector<int> durations_from_log(const Tensor<T>& log_duration) {
  std::vector<int> out;
  out.reserve(log_duration.size());
  for (const T v : log_duration.storage()) {
    const double frames = std::floor(std::exp(static_cast<double>(v)) - 1.0 + 0.5);
    out.push_back(frames > 0.0 ? static_cast<int>(std::min(frames, 1e6)) : 0);
  }
  return out;
}

template <typename T>
Var<T> length_regulate(Var<T> hiddens, std::span<const int> durations) {
  return ops::repeat_rows(hiddens, durations);
}

namespace {

template <typename T>
void add_layer_norm(ParameterSet<T>& ps, const std::string& prefix, std::size_t width) {
  ps.add(prefix + ".gamma", Tensor<T>({1, width}, T(1)));
  ps.add(prefix + ".beta", Tensor<T>({1, width}));
}

template <typename T>
void add_conv(ParameterSet<T>& ps, const std::string& prefix, std::size_t d_out, std::size_t d_in,
              std::size_t k, Rng& rng) {
  ps.add(prefix + ".weight", uniform_fan_in<T>({d_out, d_in, k}, d_in * k, rng));
  ps.add(prefix + ".bias", Tensor<T>({1, d_out}));
}

template <typename T>
void add_linear(ParameterSet<T>& ps, const std::string& prefix, std::size_t d_in, std::size_t d_out,
                Rng& rng) {
  ps.add(prefix + ".weight", uniform_fan_in<T>({d_in, d_out}, d_in, rng));
  ps.add(prefix + ".bias", Tensor<T>({1, d_out}));
}

template <typename T>
void add_attention(ParameterSet<T>& ps, const std::string& prefix, std::size_t h, Rng& rng) {
  for (const char* m : {"q", "k", "v", "o"}) {
    ps.add(prefix + ".w_" + m, uniform_fan_in<T>({h, h}, h, rng));
    ps.add(prefix + ".b_" + m, Tensor<T>({1, h}));
  }
}

template <typename T>
void add_ffn(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& c, Rng& rng) {
  const auto h = static_cast<std::size_t>(c.hidden);
  const auto f = static_cast<std::size_t>(c.ffn_filter);
  add_conv(ps, prefix + ".conv1", f, h, static_cast<std::size_t>(c.ffn_kernel), rng);
  add_conv(ps, prefix + ".conv2", h, f, 1, rng);
}

template <typename T>
void add_cln_site(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& c, Rng& rng) {
  const auto h = static_cast<std::size_t>(c.hidden);
  // With the initial embedding scale s, coordinates of E W_gamma start near 1
  // (or near 0 when a separate bias carries the 1) and E W_beta near 0.
  const double unit = 1.0 / (static_cast<double>(h) * c.speaker_embedding_scale);
  Tensor<T> wg({h, h}), wb({h, h});
  const double gamma_center = c.cln_bias_enabled ? 0.0 : unit;
  for (T& v : wg.storage()) v = static_cast<T>(gamma_center + 0.1 * unit * rng.uniform(-1.0, 1.0));
  for (T& v : wb.storage()) v = static_cast<T>(0.1 * unit * rng.uniform(-1.0, 1.0));
  ps.add(prefix + ".w_gamma", std::move(wg));
  ps.add(prefix + ".w_beta", std::move(wb));
  if (c.cln_bias_enabled) {
    ps.add(prefix + ".b_gamma", Tensor<T>({1, h}, T(1)));
    ps.add(prefix + ".b_beta", Tensor<T>({1, h}));
  }
}

template <typename T>
void add_variance_predictor(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& c, Rng& rng) {
  const auto h = static_cast<std::size_t>(c.hidden);
  const auto f = static_cast<std::size_t>(c.variance_filter);
  const auto k = static_cast<std::size_t>(c.variance_kernel);
  add_conv(ps, prefix + ".conv1", f, h, k, rng);
  add_layer_norm(ps, prefix + ".ln1", f);
  add_conv(ps, prefix + ".conv2", f, f, k, rng);
  add_layer_norm(ps, prefix + ".ln2", f);
  add_linear(ps, prefix + ".out", f, 1, rng);
}

}  // namespace

template <typename T>
ParameterSet<T> init_model_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(derive_seed(seed, "init"));
  ParameterSet<T> ps;
  const auto h = static_cast<std::size_t>(c.hidden);

  ps.add("encoder.embedding", uniform_fan_in<T>({static_cast<std::size_t>(c.phoneme_vocab), h}, h, rng));
  for (int i = 0; i < c.n_encoder_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    add_attention(ps, p + ".attn", h, rng);
    add_layer_norm(ps, p + ".ln_attn", h);
    add_ffn(ps, p + ".ffn", c, rng);
    add_layer_norm(ps, p + ".ln_ffn", h);
  }

  for (int i = 0; i < c.n_decoder_layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i);
    add_attention(ps, p + ".attn", h, rng);
    add_ffn(ps, p + ".ffn", c, rng);
  }
  for (int site = 0; site < c.cln_sites(); ++site) {
    const std::string p = cln_site_prefix(c, site);
    if (c.use_cln)
      add_cln_site(ps, p, c, rng);
    else
      add_layer_norm(ps, p, h);
  }
  add_linear(ps, "decoder.mel_out", h, static_cast<std::size_t>(c.mel_dim), rng);

  for (const char* v : {"duration", "pitch", "energy"})
    add_variance_predictor(ps, std::string("variance.") + v, c, rng);
  ps.add("variance.pitch_embedding", uniform_fan_in<T>({1, h}, 1, rng));
  ps.add("variance.energy_embedding", uniform_fan_in<T>({1, h}, 1, rng));

  add_acoustic_params(ps, c, rng);

  Rng spk_rng(derive_seed(seed, "speakers"));
  for (int s = 0; s < c.n_speakers; ++s) {
    Tensor<T> e({1, h});
    for (T& v : e.storage())
      v = static_cast<T>(c.speaker_embedding_scale * (1.0 + 0.1 * spk_rng.normal()));
    ps.add(speaker_embedding_name(s), std::move(e));
  }
  return ps;
}

template <typename T>
Backbone<T>::Backbone(const ModelConfig& config, const ParameterSet<T>& params)
    : config_(config), params_(params) {}

template <typename T>
Var<T> Backbone<T>::param(Tape<T>& tape, std::string_view name) const {
  return tape.parameter(params_.at(name));
}

template <typename T>
Var<T> Backbone<T>::attention(Var<T> x, const std::string& prefix) const {
  Tape<T>& t = *x.tape;
  const ops::AttentionWeights<T> w{param(t, prefix + ".w_q"), param(t, prefix + ".b_q"),
                                   param(t, prefix + ".w_k"), param(t, prefix + ".b_k"),
                                   param(t, prefix + ".w_v"), param(t, prefix + ".b_v"),
                                   param(t, prefix + ".w_o"), param(t, prefix + ".b_o")};
  return ops::multi_head_attention(x, w, static_cast<std::size_t>(config_.n_heads));
}

template <typename T>
Var<T> Backbone<T>::feed_forward(Var<T> x, const std::string& prefix, Rng*) const {
  Tape<T>& t = *x.tape;
  const Var<T> y = ops::relu(ops::conv1d(x, param(t, prefix + ".conv1.weight"),
                                         std::optional<Var<T>>(param(t, prefix + ".conv1.bias")), 1));
  return ops::conv1d(y, param(t, prefix + ".conv2.weight"),
                     std::optional<Var<T>>(param(t, prefix + ".conv2.bias")), 1);
}

template <typename T>
Var<T> Backbone<T>::encode_phonemes(Tape<T>& tape, std::span<const int> phonemes, Rng* dropout) const {
  require(!phonemes.empty(), ErrorCode::kInvalidArgument, "empty phoneme sequence");
  const T rate = static_cast<T>(config_.dropout);
  Var<T> x = ops::gather_rows(param(tape, "encoder.embedding"), phonemes);
  x = ops::add(x, tape.constant(sinusoid_positions<T>(phonemes.size(), x.cols())));
  const T eps = static_cast<T>(config_.ln_eps);
  for (int i = 0; i < config_.n_encoder_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    Var<T> a = ops::dropout(attention(x, p + ".attn"), rate, dropout);
    x = ops::layer_norm(ops::add(x, a), param(tape, p + ".ln_attn.gamma"), param(tape, p + ".ln_attn.beta"), eps);
    Var<T> f = ops::dropout(feed_forward(x, p + ".ffn", dropout), rate, dropout);
    x = ops::layer_norm(ops::add(x, f), param(tape, p + ".ln_ffn.gamma"), param(tape, p + ".ln_ffn.beta"), eps);
  }
  return x;
}

template <typename T>
Var<T> Backbone<T>::variance_predictor(Var<T> x, const std::string& prefix, Rng* dropout) const {
  Tape<T>& t = *x.tape;
  const T rate = static_cast<T>(config_.dropout);
  const T eps = static_cast<T>(config_.ln_eps);
  for (const char* layer : {"1", "2"}) {
    const std::string conv = prefix + ".conv" + layer;
    const std::string ln = prefix + ".ln" + layer;
    x = ops::relu(ops::conv1d(x, param(t, conv + ".weight"), std::optional<Var<T>>(param(t, conv + ".bias")), 1));
    x = ops::layer_norm(x, param(t, ln + ".gamma"), param(t, ln + ".beta"), eps);
    x = ops::dropout(x, rate, dropout);
  }
  return ops::linear(x, param(t, prefix + ".out.weight"), std::optional<Var<T>>(param(t, prefix + ".out.bias")));
}

template <typename T>
VariancePrediction<T> Backbone<T>::predict_variances(Var<T> hiddens, Rng* dropout) const {
  require(hiddens.rows() >= 1, ErrorCode::kInvalidArgument, "variance prediction over zero phonemes");
  return {variance_predictor(hiddens, "variance.duration", dropout),
          variance_predictor(hiddens, "variance.pitch", dropout),
          variance_predictor(hiddens, "variance.energy", dropout)};
}

template <typename T>
Var<T> Backbone<T>::embed_variances(Var<T> hiddens, Var<T> pitch, Var<T> energy) const {
  const std::size_t len = hiddens.rows();
  for (const Var<T>& v : {pitch, energy})
    require(v.value().rank() == 2 && v.rows() == len && v.cols() == 1, ErrorCode::kShapeMismatch,
            "variance embedding: expected [" + std::to_string(len) + "x1] values, got " +
                shape_string(v.shape()));
  Tape<T>& t = *hiddens.tape;
  const Var<T> p = ops::matmul(pitch, param(t, "variance.pitch_embedding"));
  const Var<T> e = ops::matmul(energy, param(t, "variance.energy_embedding"));
  return ops::add(ops::add(hiddens, p), e);
}

template <typename T>
Var<T> Backbone<T>::speaker_embedding(Tape<T>& tape, int speaker) const {
  return param(tape, speaker_embedding_name(speaker));
}

template <typename T>
ops::ConditionalScaleBias<T> Backbone<T>::cln_scale_bias(int site, Var<T> e) const {
  require(config_.use_cln, ErrorCode::kState, "model was built without conditional layer norm");
  Tape<T>& t = *e.tape;
  const std::string p = cln_site_prefix(config_, site);
  auto sb = ops::conditional_scale_bias(e, param(t, p + ".w_gamma"), param(t, p + ".w_beta"));
  if (config_.cln_bias_enabled) {
    sb.gamma = ops::add(sb.gamma, param(t, p + ".b_gamma"));
    sb.beta = ops::add(sb.beta, param(t, p + ".b_beta"));
  }
  return sb;
}

template <typename T>
Var<T> Backbone<T>::norm_site(Var<T> x, int site, const std::string& plain_prefix,
                              const SpeakerCondition<T>& speaker) const {
  const T eps = static_cast<T>(config_.ln_eps);
  Tape<T>& t = *x.tape;
  if (!config_.use_cln)
    return ops::layer_norm(x, param(t, plain_prefix + ".gamma"), param(t, plain_prefix + ".beta"), eps);
  if (speaker.deployed) {
    const auto c = static_cast<std::size_t>(site);
    return ops::layer_norm(x, t.borrow(speaker.deployed->gammas[c]), t.borrow(speaker.deployed->betas[c]), eps);
  }
  const auto sb = cln_scale_bias(site, *speaker.embedding);
  return ops::layer_norm(x, sb.gamma, sb.beta, eps);
}

template <typename T>
Var<T> Backbone<T>::decode_mel(Var<T> frames, const SpeakerCondition<T>& speaker, Rng* dropout) const {
  const auto h = static_cast<std::size_t>(config_.hidden);
  require(frames.value().rank() == 2 && frames.cols() == h, ErrorCode::kShapeMismatch,
          "decoder input must be [T x " + std::to_string(h) + "], got " + shape_string(frames.shape()));
  require(speaker.embedding.has_value() != (speaker.deployed != nullptr), ErrorCode::kInvalidArgument,
          "decoder needs exactly one of a speaker embedding or deployed speaker parameters");
  if (speaker.deployed) {
    const auto sites = static_cast<std::size_t>(config_.cln_sites());
    require(speaker.deployed->gammas.size() == sites && speaker.deployed->betas.size() == sites,
            ErrorCode::kShapeMismatch,
            "deployed speaker has " + std::to_string(speaker.deployed->gammas.size()) +
                " scale vectors, decoder has " + std::to_string(sites) + " sites");
    for (std::size_t c = 0; c < sites; ++c)
      require(speaker.deployed->gammas[c].shape() == Shape{1, h} &&
                  speaker.deployed->betas[c].shape() == Shape{1, h},
              ErrorCode::kShapeMismatch, "deployed speaker vectors must be [1x" + std::to_string(h) + "]");
  } else {
    require(speaker.embedding->shape() == Shape{1, h}, ErrorCode::kShapeMismatch,
            "speaker embedding must be [1x" + std::to_string(h) + "]");
  }
  Tape<T>& t = *frames.tape;
  const T rate = static_cast<T>(config_.dropout);
  Var<T> x = ops::add(frames, t.constant(sinusoid_positions<T>(frames.rows(), h)));
  int site = 0;
  for (int i = 0; i < config_.n_decoder_layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i);
    Var<T> a = ops::dropout(attention(x, p + ".attn"), rate, dropout);
    x = norm_site(ops::add(x, a), site, cln_site_prefix(config_, site), speaker);
    ++site;
    Var<T> f = ops::dropout(feed_forward(x, p + ".ffn", dropout), rate, dropout);
    x = norm_site(ops::add(x, f), site, cln_site_prefix(config_, site), speaker);
    ++site;
  }
  x = norm_site(x, site, cln_site_prefix(config_, site), speaker);
  return ops::linear(x, param(t, "decoder.mel_out.weight"), std::optional<Var<T>>(param(t, "decoder.mel_out.bias")));
}

TrainabilityMask finetune_mask(const ModelConfig& config, int speaker) {
  TrainabilityMask mask;
  mask.include.push_back(speaker_embedding_name(speaker));
  if (config.use_cln) {
    for (const char* m : {".w_gamma", ".w_beta", ".b_gamma", ".b_beta"}) mask.include.push_back(std::string("decoder.*") + m);
  }
  return mask;
}

template <typename T>
DeployedSpeakerParams<T> export_speaker(const ModelConfig& config, const ParameterSet<T>& params, int speaker) {
  require(config.use_cln, ErrorCode::kState, "export needs a model with conditional layer norm");
  require(params.contains(speaker_embedding_name(speaker)), ErrorCode::kOutOfRange,
          "unknown speaker id " + std::to_string(speaker));
  const Backbone<T> model(config, params);
  Tape<T> tape;
  const Var<T> e = model.speaker_embedding(tape, speaker);
  DeployedSpeakerParams<T> out;
  out.speaker = speaker;
  out.embedding = e.value();
  for (int site = 0; site < config.cln_sites(); ++site) {
    const auto sb = model.cln_scale_bias(site, e);
    out.gammas.push_back(sb.gamma.value());
    out.betas.push_back(sb.beta.value());
  }
  return out;
}

template <typename T>
std::size_t count_params(const ModelConfig& config, const ParameterSet<T>& params, CountScope scope, int speaker) {
  switch (scope) {
    case CountScope::kTotal:
      return params.scalar_count();
    case CountScope::kFinetuned: {
      require(params.contains(speaker_embedding_name(speaker)), ErrorCode::kOutOfRange,
              "unknown speaker id " + std::to_string(speaker));
      const TrainabilityMask mask = finetune_mask(config, speaker);
      std::size_t n = 0;
      for (const auto& [name, p] : params)
        if (mask.matches(name)) n += p.value.size();
      return n;
    }
    case CountScope::kDeployed:
      return export_speaker(config, params, speaker).scalar_count();
  }
  return 0;
}

std::size_t count_params(const ModelConfig& config, CountScope scope) {
  const ParameterSet<float> params = init_model_params<float>(config, 0);
  return count_params(config, params, scope, 0);
}

#define VOXADAPT_INSTANTIATE(T)                                                                        \
  template struct DeployedSpeakerParams<T>;                                                            \
  template class Backbone<T>;                                                                          \
  template Tensor<T> uniform_fan_in<T>(Shape, std::size_t, Rng&);                                      \
  template Tensor<T> sinusoid_positions<T>(std::size_t, std::size_t);                                  \
  template std::vector<int> durations_from_log<T>(const Tensor<T>&);                                   \
  template Var<T> length_regulate<T>(Var<T>, std::span<const int>);                                    \
  template ParameterSet<T> init_model_params<T>(const ModelConfig&, std::uint64_t);                    \
  template DeployedSpeakerParams<T> export_speaker<T>(const ModelConfig&, const ParameterSet<T>&, int); \
  template std::size_t count_params<T>(const ModelConfig&, const ParameterSet<T>&, CountScope, int);

VOXADAPT_INSTANTIATE(float)
VOXADAPT_INSTANTIATE(double)
#undef VOXADAPT_INSTANTIATE

}  // namespace voxadapt
