// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "voxadapt/acoustic.hpp"
#include "voxadapt/text_format.hpp"

namespace voxadapt {

void TrainSchedule::validate() const {
  require(phase1_steps >= 0 && phase2_steps >= 0 && phase1_steps + phase2_steps > 0, ErrorCode::kConfig,
          "train.phase1_steps and train.phase2_steps must be non-negative with a positive sum");
  require(batch_size >= 1, ErrorCode::kConfig, "train.batch_size must be at least 1");
  require(learning_rate >= 0.0 && finetune_learning_rate >= 0.0, ErrorCode::kConfig,
          "learning rates must be non-negative");
  require(finetune_steps >= 0, ErrorCode::kConfig, "train.finetune_steps must be non-negative");
}

std::map<std::string, std::string> to_key_values(const TrainSchedule& s) {
  return {
      {"train.phase1_steps", std::to_string(s.phase1_steps)},
      {"train.phase2_steps", std::to_string(s.phase2_steps)},
      {"train.batch_size", std::to_string(s.batch_size)},
      {"train.learning_rate", format_real(s.learning_rate)},
      {"train.finetune_steps", std::to_string(s.finetune_steps)},
      {"train.finetune_learning_rate", format_real(s.finetune_learning_rate)},
      {"train.seed", std::to_string(s.seed)},
  };
}

bool apply_key_value(TrainSchedule& s, const std::string& key, const std::string& value) {
  if (key == "train.phase1_steps") s.phase1_steps = parse_int(value, key);
  else if (key == "train.phase2_steps") s.phase2_steps = parse_int(value, key);
  else if (key == "train.batch_size") s.batch_size = parse_int(value, key);
  else if (key == "train.learning_rate") s.learning_rate = parse_real(value, key);
  else if (key == "train.finetune_steps") s.finetune_steps = parse_int(value, key);
  else if (key == "train.finetune_learning_rate") s.finetune_learning_rate = parse_real(value, key);
  else if (key == "train.seed") s.seed = parse_u64(value, key);
  else return false;
  return true;
}

TrainabilityMask pretrain_mask(LossMode mode) {
  require(mode != LossMode::kFinetune, ErrorCode::kInvalidArgument,
          "the finetune mask depends on the speaker, use finetune_mask");
  TrainabilityMask mask;
  mask.include.push_back("*");
  if (mode == LossMode::kPhase1) mask.exclude.push_back("acoustic.phoneme_predictor.*");
  return mask;
}

namespace {

// Re-labels a non-finite failure inside f with the loss component it came from.
template <typename F>
auto guarded(const char* component, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFinite) throw;
    fail(ErrorCode::kNonFinite, std::string(component) + " loss: " + e.what());
  }
}

template <typename T>
Tensor<T> column(const std::vector<double>& values) {
  Tensor<T> t = Tensor<T>::matrix(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<T>(values[i]);
  return t;
}

void check_utterance(const SyntheticUtterance& u) {
  const std::size_t len = u.phonemes.size();
  require(len > 0, ErrorCode::kInvalidArgument, "utterance without phonemes");
  require(u.durations.size() == len && u.pitch.size() == len && u.energy.size() == len,
          ErrorCode::kShapeMismatch, "utterance phoneme, duration, pitch and energy lengths differ");
  long total = 0;
  for (const int d : u.durations) total += d;
  require(total == static_cast<long>(u.mel.rows()), ErrorCode::kShapeMismatch,
          "utterance durations sum to " + std::to_string(total) + " but mel has " +
              std::to_string(u.mel.rows()) + " frames");
}

double scalar(Var<float> v) { return static_cast<double>(v.value()[0]); }

// One optimizer step over batch_size utterances drawn with replacement.
LossRecord train_step(const ModelConfig& config, ParameterSet<float>& params, AdamState<float>& adam,
                      const UtteranceSet& data, int batch_size, Rng& batch_rng, std::uint64_t dropout_seed,
                      LossMode mode) {
  LossRecord rec;
  const float inv_b = 1.0f / static_cast<float>(batch_size);
  const double inv_bd = 1.0 / static_cast<double>(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const auto pick = static_cast<std::size_t>(batch_rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
    const SyntheticUtterance& u = *data[pick];
    Rng drop(derive_seed(dropout_seed, "item", static_cast<std::uint64_t>(b)));
    Tape<float> tape;
    const LossTerms<float> terms =
        compute_losses(tape, config, params, u, mode, config.dropout > 0.0 ? &drop : nullptr);
    tape.backward(ops::scale(terms.total, inv_b), params);
    rec.mel += scalar(terms.mel) * inv_bd;
    rec.duration += scalar(terms.duration) * inv_bd;
    rec.pitch += scalar(terms.pitch) * inv_bd;
    rec.energy += scalar(terms.energy) * inv_bd;
    if (terms.predictor) rec.predictor += scalar(*terms.predictor) * inv_bd;
    rec.total += scalar(terms.total) * inv_bd;
  }
  adam_step(params, adam);
  return rec;
}

}  // namespace

template <typename T>
LossTerms<T> compute_losses(Tape<T>& tape, const ModelConfig& c, const ParameterSet<T>& params,
                            const SyntheticUtterance& u, LossMode mode, Rng* dropout) {
  check_utterance(u);
  require(u.mel.cols() == static_cast<std::size_t>(c.mel_dim), ErrorCode::kShapeMismatch,
          "utterance has " + std::to_string(u.mel.cols()) + " mel bins, model expects " +
              std::to_string(c.mel_dim));
  const Backbone<T> model(c, params);
  const AcousticConditioner<T> acoustic(c, params);
  const Var<T> mel = tape.constant(u.mel.template cast<T>());

  const Var<T> h = guarded("encoder", [&] { return model.encode_phonemes(tape, u.phonemes, dropout); });
  const Var<T> e = model.speaker_embedding(tape, u.speaker);
  std::optional<Var<T>> utt, phon, proj;
  if (c.use_utterance_condition)
    utt = guarded("utterance condition", [&] { return acoustic.utterance_encode(mel, dropout); });
  if (c.use_phoneme_condition) {
    phon = guarded("phoneme condition",
                   [&] { return acoustic.phoneme_encode(phoneme_average(mel, u.durations), dropout); });
    proj = acoustic.projection(tape);
  }
  const Var<T> x = combine_conditions(h, utt, phon, e, proj);

  const VariancePrediction<T> var = guarded("variance", [&] { return model.predict_variances(x, dropout); });
  std::vector<double> log_dur(u.durations.size());
  for (std::size_t i = 0; i < log_dur.size(); ++i) log_dur[i] = std::log1p(static_cast<double>(u.durations[i]));
  const Var<T> pitch = tape.constant(column<T>(u.pitch));
  const Var<T> energy = tape.constant(column<T>(u.energy));

  LossTerms<T> out;
  out.duration = guarded("duration", [&] { return ops::mse(var.log_duration, tape.constant(column<T>(log_dur))); });
  out.pitch = guarded("pitch", [&] { return ops::mse(var.pitch, pitch); });
  out.energy = guarded("energy", [&] { return ops::mse(var.energy, energy); });
  out.mel = guarded("mel", [&] {
    const Var<T> frames = length_regulate(model.embed_variances(x, pitch, energy), u.durations);
    return ops::mse(model.decode_mel(frames, SpeakerCondition<T>::from_embedding(e), dropout), mel);
  });
  out.total = ops::add(ops::add(ops::add(out.mel, out.duration), out.pitch), out.energy);
  if (mode != LossMode::kPhase1 && c.use_phoneme_condition) {
    // The encoder output is the label; detach keeps this loss out of the encoder.
    out.predictor = guarded("predictor", [&] {
      return ops::mse(acoustic.phoneme_predict(h, dropout), tape.detach(*phon));
    });
    out.total = ops::add(out.total, *out.predictor);
  }
  return out;
}

Checkpoint pretrain(const ModelConfig& config, const TrainSchedule& schedule, const UtteranceSet& train,
                    const StepCallback& on_step) {
  config.validate();
  schedule.validate();
  require(!train.empty(), ErrorCode::kInvalidArgument, "pretraining corpus is empty");
  std::set<int> speakers;
  for (const SyntheticUtterance* u : train) {
    require(u->speaker >= 0 && u->speaker < config.n_speakers, ErrorCode::kOutOfRange,
            "training utterance of speaker " + std::to_string(u->speaker) + " but the model has " +
                std::to_string(config.n_speakers) + " speakers");
    speakers.insert(u->speaker);
  }
  require(speakers.size() >= 2, ErrorCode::kInvalidArgument, "pretraining needs at least 2 speakers");

  Checkpoint ck{config, init_model_params<float>(config, schedule.seed), schedule.seed, 0};
  // Moments for every parameter, so phase 2 finds buffers for the predictor.
  AdamState<float> adam = AdamState<float>::init(ck.params, {schedule.learning_rate});
  Rng batch_rng(derive_seed(schedule.seed, "batches"));
  const int total = schedule.phase1_steps + schedule.phase2_steps;
  for (int step = 0; step < total; ++step) {
    const bool phase1 = step < schedule.phase1_steps;
    const LossMode mode = phase1 ? LossMode::kPhase1 : LossMode::kPhase2;
    if (step == 0 || step == schedule.phase1_steps) pretrain_mask(mode).apply(ck.params);
    LossRecord rec = train_step(config, ck.params, adam, train, schedule.batch_size, batch_rng,
                                derive_seed(schedule.seed, "dropout", static_cast<std::uint64_t>(step)), mode);
    rec.step = step;
    rec.phase = phase1 ? 1 : 2;
    if (on_step) on_step(rec);
  }
  ck.step = total;
  return ck;
}

template <typename T>
Tensor<T> mean_speaker_embedding(const ParameterSet<T>& params) {
  Tensor<T> sum;
  std::size_t n = 0;
  std::vector<double> acc;
  for (const auto& [name, p] : params) {
    if (name.rfind("speaker_embedding.", 0) != 0) continue;
    if (acc.empty()) {
      acc.assign(p.value.size(), 0.0);
      sum = Tensor<T>(p.value.shape());
    }
    require_same_shape(sum, p.value, "speaker embeddings");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(p.value[i]);
    ++n;
  }
  require(n > 0, ErrorCode::kState, "no speaker embeddings to average");
  for (std::size_t i = 0; i < acc.size(); ++i) sum[i] = static_cast<T>(acc[i] / static_cast<double>(n));
  return sum;
}

FinetuneResult finetune(const Checkpoint& ck, int speaker, const UtteranceSet& adaptation,
                        const TrainSchedule& schedule, const StepCallback& on_step) {
  const ModelConfig& config = ck.config;
  require(!adaptation.empty(), ErrorCode::kInvalidArgument, "adaptation set is empty (K = 0)");
  require(schedule.finetune_steps >= 0 && schedule.batch_size >= 1, ErrorCode::kConfig,
          "finetune needs non-negative steps and a positive batch size");
  for (const SyntheticUtterance* u : adaptation)
    require(u->speaker == speaker, ErrorCode::kInvalidArgument,
            "adaptation set mixes speaker " + std::to_string(u->speaker) + " into speaker " +
                std::to_string(speaker));

  FinetuneResult r;
  r.start = ck.params;
  const std::string emb = speaker_embedding_name(speaker);
  if (!r.start.contains(emb)) r.start.add(emb, mean_speaker_embedding(r.start));
  r.adapted = r.start;
  const TrainabilityMask mask = finetune_mask(config, speaker);
  mask.apply(r.adapted);
  AdamState<float> adam = AdamState<float>::init(r.adapted, {schedule.finetune_learning_rate});
  Rng batch_rng(derive_seed(schedule.seed, "finetune_batches", static_cast<std::uint64_t>(speaker)));
  const std::uint64_t dropout_root = derive_seed(schedule.seed, "finetune_dropout", static_cast<std::uint64_t>(speaker));
  for (int step = 0; step < schedule.finetune_steps; ++step) {
    LossRecord rec = train_step(config, r.adapted, adam, adaptation, schedule.batch_size, batch_rng,
                                derive_seed(dropout_root, "step", static_cast<std::uint64_t>(step)),
                                LossMode::kFinetune);
    rec.step = step;
    rec.phase = 3;
    if (on_step) on_step(rec);
  }
  for (const auto& [name, p] : r.adapted) {
    if (!mask.matches(name)) continue;
    Tensor<float> d = p.value;
    const Tensor<float>& s = r.start.at(name).value;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    r.delta.add(name, std::move(d));
  }
  return r;
}

template <typename T>
Tensor<T> infer(const ModelConfig& c, const ParameterSet<T>& params, const InferSpeaker<T>& speaker,
                std::span<const int> phonemes, const Tensor<T>* reference_mel,
                std::vector<int>* predicted_durations) {
  const Backbone<T> model(c, params);
  const AcousticConditioner<T> acoustic(c, params);
  Tape<T> tape;
  Var<T> e;
  SpeakerCondition<T> cond;
  if (speaker.deployed) {
    require(c.use_cln, ErrorCode::kState, "deployed speaker parameters need a model with conditional layer norm");
    e = tape.borrow(speaker.deployed->embedding);
    cond = SpeakerCondition<T>::from_deployed(*speaker.deployed);
  } else {
    require(params.contains(speaker_embedding_name(speaker.speaker)), ErrorCode::kOutOfRange,
            "unknown speaker id " + std::to_string(speaker.speaker));
    e = model.speaker_embedding(tape, speaker.speaker);
    cond = SpeakerCondition<T>::from_embedding(e);
  }
  const Var<T> h = model.encode_phonemes(tape, phonemes, nullptr);
  std::optional<Var<T>> utt, phon, proj;
  if (c.use_utterance_condition) {
    require(reference_mel != nullptr && reference_mel->rank() == 2 && reference_mel->rows() > 0,
            ErrorCode::kInvalidArgument, "inference needs a reference utterance for the utterance-level condition");
    utt = acoustic.utterance_encode(tape.borrow(*reference_mel), nullptr);
  }
  if (c.use_phoneme_condition) {
    phon = acoustic.phoneme_predict(h, nullptr);
    proj = acoustic.projection(tape);
  }
  const Var<T> x = combine_conditions(h, utt, phon, e, proj);
  const VariancePrediction<T> var = model.predict_variances(x, nullptr);
  std::vector<int> durations = durations_from_log(var.log_duration.value());
  long frames = 0;
  for (const int d : durations) frames += d;
  require(frames > 0, ErrorCode::kInvalidArgument, "predicted durations are all zero frames");
  const Var<T> hidden_frames = length_regulate(model.embed_variances(x, var.pitch, var.energy), durations);
  Tensor<T> mel = model.decode_mel(hidden_frames, cond, nullptr).value();
  if (predicted_durations) *predicted_durations = std::move(durations);
  return mel;
}

template <typename T>
Tensor<T> resample_frames(const Tensor<T>& pred, std::size_t target_frames) {
  require(pred.rank() == 2 && pred.rows() > 0 && target_frames > 0, ErrorCode::kInvalidArgument,
          "resampling needs non-empty frame sequences");
  const std::size_t src = pred.rows();
  Tensor<T> out = Tensor<T>::matrix(target_frames, pred.cols());
  for (std::size_t j = 0; j < target_frames; ++j) {
    const auto i = std::min(src - 1, static_cast<std::size_t>((2 * j + 1) * src / (2 * target_frames)));
    std::copy(pred.row_span(i).begin(), pred.row_span(i).end(), out.row_span(j).begin());
  }
  return out;
}

EvalReport evaluate(const ModelConfig& config, const ParameterSet<float>& params, const UtteranceSet& testset,
                    const EvalOptions& options) {
  require(!testset.empty(), ErrorCode::kInvalidArgument, "evaluation set is empty");
  struct Acc {
    int n = 0;
    int phonemes = 0;
    int exact = 0;
    double tf = 0.0;
    double fr = 0.0;
  };
  std::map<int, Acc> per;
  Acc all;
  for (const SyntheticUtterance* u : testset) {
    Tape<float> tape;
    const LossTerms<float> terms = compute_losses(tape, config, params, *u, LossMode::kPhase1, nullptr);
    const double tf = scalar(terms.mel);

    InferSpeaker<float> who{u->speaker, nullptr};
    if (options.deployed) {
      const auto it = options.deployed->find(u->speaker);
      if (it != options.deployed->end()) who.deployed = &it->second;
    }
    const Tensor<float>* ref = nullptr;
    if (config.use_utterance_condition) {
      require(options.references != nullptr && options.references->count(u->speaker) == 1, ErrorCode::kInvalidArgument,
              "no reference utterance for speaker " + std::to_string(u->speaker));
      ref = &options.references->at(u->speaker)->mel;
    }
    std::vector<int> durs;
    const Tensor<float> pred = infer(config, params, who, u->phonemes, ref, &durs);
    const Tensor<float> aligned = resample_frames(pred, u->mel.rows());
    double sq = 0.0;
    for (std::size_t i = 0; i < aligned.size(); ++i) {
      const double d = static_cast<double>(aligned[i]) - static_cast<double>(u->mel[i]);
      sq += d * d;
    }
    const double fr = sq / static_cast<double>(aligned.size());
    int exact = 0;
    for (std::size_t i = 0; i < durs.size(); ++i) exact += durs[i] == u->durations[i] ? 1 : 0;

    for (Acc* a : {&per[u->speaker], &all}) {
      a->n += 1;
      a->phonemes += static_cast<int>(durs.size());
      a->exact += exact;
      a->tf += tf;
      a->fr += fr;
    }
  }
  const auto finish = [](int speaker, const Acc& a) {
    SpeakerMetrics m;
    m.speaker = speaker;
    m.utterances = a.n;
    m.teacher_forced_mse = a.tf / a.n;
    m.free_running_mse = a.fr / a.n;
    m.duration_accuracy = static_cast<double>(a.exact) / a.phonemes;
    return m;
  };
  EvalReport report;
  for (const auto& [speaker, a] : per) report.speakers.push_back(finish(speaker, a));
  report.overall = finish(-1, all);
  return report;
}

#define VOXADAPT_INSTANTIATE(T)                                                                              \
  template LossTerms<T> compute_losses<T>(Tape<T>&, const ModelConfig&, const ParameterSet<T>&,              \
                                          const SyntheticUtterance&, LossMode, Rng*);                        \
  template Tensor<T> mean_speaker_embedding<T>(const ParameterSet<T>&);                                      \
  template Tensor<T> infer<T>(const ModelConfig&, const ParameterSet<T>&, const InferSpeaker<T>&,            \
                              std::span<const int>, const Tensor<T>*, std::vector<int>*);                    \
  template Tensor<T> resample_frames<T>(const Tensor<T>&, std::size_t);

VOXADAPT_INSTANTIATE(float)
VOXADAPT_INSTANTIATE(double)
#undef VOXADAPT_INSTANTIATE

}  // namespace voxadapt
