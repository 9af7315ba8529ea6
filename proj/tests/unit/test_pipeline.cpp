#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "voxadapt/error.hpp"
#include "voxadapt/pipeline.hpp"

using namespace voxadapt;

namespace {

// Two pretraining speakers (0, 1) and two adaptation speakers (2, 3).
struct ToyWorld {
  ModelConfig config;
  CorpusSpec spec;
  Corpus corpus;

  ToyWorld() {
    config = ModelConfig::toy();
    config.n_speakers = 2;
    spec.n_speakers = 4;
    spec.n_adaptation_speakers = 2;
    spec.utterances_per_speaker = 12;
    spec.adaptation_utterances = 6;
    spec.holdout_utterances = 3;
    spec.mel_dim = config.mel_dim;
    spec.phoneme_vocab = config.phoneme_vocab;
    corpus = gen_corpus(spec);
  }
};

const ToyWorld& world() {
  static const ToyWorld w;
  return w;
}

TrainSchedule short_schedule(int phase1, int phase2) {
  TrainSchedule s;
  s.phase1_steps = phase1;
  s.phase2_steps = phase2;
  s.finetune_steps = 20;
  return s;
}

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("paper schedule defaults") {
  const TrainSchedule s;
  CHECK(s.phase1_steps == 60000);
  CHECK(s.phase2_steps == 40000);
  CHECK(s.finetune_steps == 2000);
}

TEST_CASE("perfect predictions give zero loss") {
  const auto& w = world();
  auto params = init_model_params<double>(w.config, 1);
  for (auto& [name, p] : params) {
    if (starts_with(name, "decoder.mel_out.") || starts_with(name, "acoustic.phoneme_encoder.out.") ||
        starts_with(name, "acoustic.phoneme_predictor.out.") || (starts_with(name, "variance.") && name.find(".out.") != std::string::npos))
      p.value.storage().assign(p.value.size(), 0.0);
  }
  params.at("variance.duration.out.bias").value[0] = std::log(2.0);
  SyntheticUtterance u;
  u.speaker = 1;
  u.phonemes = {1, 2, 3};
  u.durations = {1, 1, 1};
  u.pitch = {0, 0, 0};
  u.energy = {0, 0, 0};
  u.mel = Tensor<float>::matrix(3, static_cast<std::size_t>(w.config.mel_dim));
  Tape<double> t;
  const auto l = compute_losses(t, w.config, params, u, LossMode::kPhase2, nullptr);
  CHECK(l.total.value()[0] == 0.0);
}

TEST_CASE("non-finite loss names the component") {
  const auto& w = world();
  auto params = init_model_params<float>(w.config, 1);
  params.at("decoder.mel_out.weight").value.storage().assign(params.at("decoder.mel_out.weight").value.size(), 1e30f);
  Tape<float> t;
  try {
    compute_losses(t, w.config, params, *w.corpus.pretrain_set().front(), LossMode::kPhase1, nullptr);
    FAIL("expected a non-finite error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("mel") != std::string::npos);
  }
}

TEST_CASE("predictor loss leaves the phoneme encoder with exactly zero gradient") {
  const auto& w = world();
  auto params = init_model_params<double>(w.config, 2);
  for (const auto* u : w.corpus.pretrain_set()) {
    Tape<double> t;
    const auto l = compute_losses(t, w.config, params, *u, LossMode::kPhase2, nullptr);
    REQUIRE(l.predictor.has_value());
    t.backward(*l.predictor, params);
  }
  double predictor_norm = 0;
  for (const auto& [name, p] : params) {
    if (starts_with(name, "acoustic.phoneme_encoder."))
      for (double g : p.grad.storage()) REQUIRE(g == 0.0);
    if (starts_with(name, "acoustic.phoneme_predictor."))
      for (double g : p.grad.storage()) predictor_norm += g * g;
  }
  CHECK(predictor_norm > 0);
}

TEST_CASE("loss halves within 200 steps on two speakers") {
  const auto& w = world();
  std::vector<double> totals;
  pretrain(w.config, short_schedule(100, 100), w.corpus.pretrain_set(),
           [&](const LossRecord& r) { totals.push_back(r.total); });
  REQUIRE(totals.size() == 200);
  const double first = std::accumulate(totals.begin(), totals.begin() + 10, 0.0) / 10;
  const double last = std::accumulate(totals.end() - 10, totals.end(), 0.0) / 10;
  INFO("first " << first << " last " << last);
  CHECK(last < 0.5 * first);
}

TEST_CASE("phase 1 leaves the phoneme-level predictor at its initial values") {
  const auto& w = world();
  const TrainSchedule s = short_schedule(10, 0);
  const auto init = init_model_params<float>(w.config, s.seed);
  const Checkpoint ck = pretrain(w.config, s, w.corpus.pretrain_set());
  bool others_moved = false;
  for (const auto& [name, p] : ck.params) {
    if (starts_with(name, "acoustic.phoneme_predictor."))
      CHECK(p.value.storage() == init.at(name).value.storage());
    else if (p.value.storage() != init.at(name).value.storage())
      others_moved = true;
  }
  CHECK(others_moved);
}

TEST_CASE("pretraining rejects bad inputs") {
  const auto& w = world();
  CHECK_THROWS_AS(pretrain(w.config, short_schedule(1, 0), {}), Error);
  const auto adapt = w.corpus.adaptation_set(2, 3);
  CHECK_THROWS_AS(pretrain(w.config, short_schedule(1, 0), adapt), Error);
}

TEST_CASE("pretraining is reproducible") {
  const auto& w = world();
  const auto a = pretrain(w.config, short_schedule(5, 5), w.corpus.pretrain_set());
  const auto b = pretrain(w.config, short_schedule(5, 5), w.corpus.pretrain_set());
  for (const auto& [name, p] : a.params) CHECK(p.value.storage() == b.params.at(name).value.storage());
}

TEST_CASE("finetuning changes exactly the conditional matrices and the new embedding") {
  const auto& w = world();
  const Checkpoint ck = pretrain(w.config, short_schedule(20, 10), w.corpus.pretrain_set());
  const int speaker = 2;
  CHECK_THROWS_AS(finetune(ck, speaker, {}, short_schedule(0, 0)), Error);

  TrainSchedule none = short_schedule(0, 0);
  none.finetune_steps = 0;
  const auto zero = finetune(ck, speaker, w.corpus.adaptation_set(speaker, 6), none);
  for (const auto& [name, d] : zero.delta)
    for (float v : d.value.storage()) CHECK(v == 0.0f);
  CHECK(zero.start.at(speaker_embedding_name(speaker)).value.storage() ==
        mean_speaker_embedding(ck.params).storage());

  const auto r = finetune(ck, speaker, w.corpus.adaptation_set(speaker, 6), short_schedule(0, 0));
  std::set<std::string> changed;
  for (const auto& [name, p] : r.adapted)
    if (p.value.storage() != r.start.at(name).value.storage()) changed.insert(name);
  std::set<std::string> want{speaker_embedding_name(speaker)};
  for (int site = 0; site < w.config.cln_sites(); ++site) {
    want.insert(cln_site_prefix(w.config, site) + ".w_gamma");
    want.insert(cln_site_prefix(w.config, site) + ".w_beta");
  }
  CHECK(changed == want);
  for (const auto& [name, p] : ck.params)
    if (starts_with(name, "encoder.")) CHECK(p.value.storage() == r.adapted.at(name).value.storage());
}

TEST_CASE("inference: shape, determinism, deployed equivalence and errors") {
  const auto& w = world();
  const Checkpoint ck = pretrain(w.config, short_schedule(60, 40), w.corpus.pretrain_set());
  const auto* ref = w.corpus.pretrain_set().front();
  const std::vector<int> phonemes{1, 5, 7, 2};
  std::vector<int> durations;
  const auto a = infer<float>(ck.config, ck.params, {0, nullptr}, phonemes, &ref->mel, &durations);
  CHECK(a.rows() == static_cast<std::size_t>(std::accumulate(durations.begin(), durations.end(), 0)));
  CHECK(a.cols() == static_cast<std::size_t>(w.config.mel_dim));
  CHECK(infer<float>(ck.config, ck.params, {0, nullptr}, phonemes, &ref->mel).storage() == a.storage());
  const auto deployed = export_speaker(ck.config, ck.params, 0);
  CHECK(infer<float>(ck.config, ck.params, {0, &deployed}, phonemes, &ref->mel).storage() == a.storage());
  CHECK_THROWS_AS(infer<float>(ck.config, ck.params, {0, nullptr}, phonemes, nullptr), Error);

  const auto r2 = resample_frames(Tensor<float>({2, 1}, std::vector<float>{1, 2}), 4);
  CHECK(r2.storage() == std::vector<float>{1, 1, 2, 2});
}

TEST_CASE("evaluation: repeatable and teacher forcing is no worse") {
  const auto& w = world();
  const Checkpoint ck = pretrain(w.config, short_schedule(150, 100), w.corpus.pretrain_set());
  std::map<int, const SyntheticUtterance*> refs{{0, &w.corpus.utterance(0, 0)}, {1, &w.corpus.utterance(1, 0)}};
  EvalOptions opt;
  opt.references = &refs;
  const auto a = evaluate(ck.config, ck.params, w.corpus.pretrain_holdout(), opt);
  const auto b = evaluate(ck.config, ck.params, w.corpus.pretrain_holdout(), opt);
  CHECK(a.overall.free_running_mse == b.overall.free_running_mse);
  CHECK(a.speakers.size() == 2);
  CHECK(a.overall.teacher_forced_mse <= a.overall.free_running_mse);
  CHECK_THROWS_AS(evaluate(ck.config, ck.params, {}, opt), Error);
  CHECK_THROWS_AS(evaluate(ck.config, ck.params, w.corpus.pretrain_holdout()), Error);
}

}  // TEST_SUITE
