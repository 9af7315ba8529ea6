// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/acoustic.hpp"

#include "voxadapt/model.hpp"

namespace voxadapt {
namespace {

template <typename T>
void add_conv_ln(ParameterSet<T>& ps, const std::string& prefix, std::size_t d_out, std::size_t d_in,
                 std::size_t k, Rng& rng) {
  ps.add(prefix + ".weight", uniform_fan_in<T>({d_out, d_in, k}, d_in * k, rng));
  ps.add(prefix + ".bias", Tensor<T>({1, d_out}));
  ps.add(prefix + ".ln.gamma", Tensor<T>({1, d_out}, T(1)));
  ps.add(prefix + ".ln.beta", Tensor<T>({1, d_out}));
}

}  // namespace

template <typename T>
void add_acoustic_params(ParameterSet<T>& ps, const ModelConfig& c, Rng& rng) {
  const auto h = static_cast<std::size_t>(c.hidden);
  const auto mel = static_cast<std::size_t>(c.mel_dim);
  const auto cond = static_cast<std::size_t>(c.condition_dim);
  if (c.use_utterance_condition) {
    const auto f = static_cast<std::size_t>(c.utterance_filter);
    const auto k = static_cast<std::size_t>(c.utterance_kernel);
    add_conv_ln(ps, "acoustic.utterance.conv1", f, mel, k, rng);
    add_conv_ln(ps, "acoustic.utterance.conv2", h, f, k, rng);
  }
  if (c.use_phoneme_condition) {
    const auto f = static_cast<std::size_t>(c.phoneme_filter);
    const auto k = static_cast<std::size_t>(c.phoneme_kernel);
    // Same structure, separate weights.
    for (const auto& [prefix, d_in] : {std::pair<std::string, std::size_t>{"acoustic.phoneme_encoder", mel},
                                       std::pair<std::string, std::size_t>{"acoustic.phoneme_predictor", h}}) {
      add_conv_ln(ps, prefix + ".conv1", f, d_in, k, rng);
      add_conv_ln(ps, prefix + ".conv2", f, f, k, rng);
      ps.add(prefix + ".out.weight", uniform_fan_in<T>({f, cond}, f, rng));
      ps.add(prefix + ".out.bias", Tensor<T>({1, cond}));
    }
    ps.add("acoustic.projection", uniform_fan_in<T>({cond, h}, cond, rng));
  }
}

template <typename T>
Var<T> phoneme_average(Var<T> mel, std::span<const int> durations) {
  return ops::segment_mean(mel, durations);
}

template <typename T>
AcousticConditioner<T>::AcousticConditioner(const ModelConfig& config, const ParameterSet<T>& params)
    : config_(config), params_(params) {}

template <typename T>
Var<T> AcousticConditioner<T>::param(Tape<T>& tape, const std::string& name) const {
  return tape.parameter(params_.at(name));
}

template <typename T>
Var<T> AcousticConditioner<T>::conv_stack(Var<T> x, const std::string& prefix, std::size_t stride,
                                          Rng* dropout) const {
  Tape<T>& t = *x.tape;
  const T eps = static_cast<T>(config_.ln_eps);
  const T rate = static_cast<T>(config_.dropout);
  for (const char* layer : {".conv1", ".conv2"}) {
    const std::string p = prefix + layer;
    x = ops::relu(ops::conv1d(x, param(t, p + ".weight"), std::optional<Var<T>>(param(t, p + ".bias")), stride));
    x = ops::layer_norm(x, param(t, p + ".ln.gamma"), param(t, p + ".ln.beta"), eps);
    x = ops::dropout(x, rate, dropout);
  }
  return x;
}

template <typename T>
Var<T> AcousticConditioner<T>::utterance_encode(Var<T> mel, Rng* dropout) const {
  require(config_.use_utterance_condition, ErrorCode::kState, "model has no utterance-level encoder");
  require(mel.value().rank() == 2 && mel.rows() >= 1, ErrorCode::kInvalidArgument,
          "utterance encoder needs at least one mel frame");
  require(mel.cols() == static_cast<std::size_t>(config_.mel_dim), ErrorCode::kShapeMismatch,
          "utterance encoder: expected " + std::to_string(config_.mel_dim) + " mel bins, got " +
              std::to_string(mel.cols()));
  const auto stride = static_cast<std::size_t>(config_.utterance_stride);
  return ops::mean_rows(conv_stack(mel, "acoustic.utterance", stride, dropout));
}

template <typename T>
Var<T> AcousticConditioner<T>::phoneme_encode(Var<T> phoneme_mel, Rng* dropout) const {
  require(config_.use_phoneme_condition, ErrorCode::kState, "model has no phoneme-level encoder");
  require(phoneme_mel.value().rank() == 2 && phoneme_mel.rows() >= 1, ErrorCode::kInvalidArgument,
          "phoneme encoder needs at least one phoneme");
  Tape<T>& t = *phoneme_mel.tape;
  const Var<T> x = conv_stack(phoneme_mel, "acoustic.phoneme_encoder", 1, dropout);
  return ops::linear(x, param(t, "acoustic.phoneme_encoder.out.weight"),
                     std::optional<Var<T>>(param(t, "acoustic.phoneme_encoder.out.bias")));
}

template <typename T>
Var<T> AcousticConditioner<T>::phoneme_predict(Var<T> phoneme_hiddens, Rng* dropout) const {
  require(config_.use_phoneme_condition, ErrorCode::kState, "model has no phoneme-level predictor");
  require(phoneme_hiddens.value().rank() == 2 && phoneme_hiddens.rows() >= 1, ErrorCode::kInvalidArgument,
          "phoneme predictor needs at least one phoneme");
  Tape<T>& t = *phoneme_hiddens.tape;
  const Var<T> x = conv_stack(phoneme_hiddens, "acoustic.phoneme_predictor", 1, dropout);
  return ops::linear(x, param(t, "acoustic.phoneme_predictor.out.weight"),
                     std::optional<Var<T>>(param(t, "acoustic.phoneme_predictor.out.bias")));
}

template <typename T>
Var<T> AcousticConditioner<T>::projection(Tape<T>& tape) const {
  return param(tape, "acoustic.projection");
}

template <typename T>
Var<T> combine_conditions(Var<T> hiddens, std::optional<Var<T>> utterance, std::optional<Var<T>> phoneme,
                          Var<T> speaker, std::optional<Var<T>> projection) {
  Var<T> x = ops::add_row(hiddens, speaker);
  if (utterance) x = ops::add_row(x, *utterance);
  if (phoneme) {
    require(projection.has_value(), ErrorCode::kInvalidArgument,
            "phoneme-level conditions need the projection matrix");
    require(phoneme->rows() == hiddens.rows(), ErrorCode::kShapeMismatch,
            "phoneme-level conditions: " + std::to_string(phoneme->rows()) + " rows for " +
                std::to_string(hiddens.rows()) + " phonemes");
    x = ops::add(x, ops::matmul(*phoneme, *projection));
  }
  return x;
}

#define VOXADAPT_INSTANTIATE(T)                                                              \
  template void add_acoustic_params<T>(ParameterSet<T>&, const ModelConfig&, Rng&);          \
  template Var<T> phoneme_average<T>(Var<T>, std::span<const int>);                          \
  template class AcousticConditioner<T>;                                                     \
  template Var<T> combine_conditions<T>(Var<T>, std::optional<Var<T>>, std::optional<Var<T>>, \
                                        Var<T>, std::optional<Var<T>>);

VOXADAPT_INSTANTIATE(float)
VOXADAPT_INSTANTIATE(double)
#undef VOXADAPT_INSTANTIATE

}  // namespace voxadapt
