// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one pass/fail line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradient_suite.hpp"
#include "voxadapt/io.hpp"
#include "voxadapt/pipeline.hpp"
#include "voxadapt/run_config.hpp"

using namespace voxadapt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// Shared toy experiments. Pretraining dominates the runtime, so each
// (seed, ablation) checkpoint is trained once and reused.

enum class Variant { kFull, kNoUtterance, kNoPhoneme, kEmbeddingOnly };

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoUtterance: return "no UL-ACM";
    case Variant::kNoPhoneme: return "no PL-ACM";
    case Variant::kEmbeddingOnly: return "embedding-only";
  }
  return "?";
}

RunConfig toy_run(std::uint64_t seed, Variant v) {
  RunConfig c = RunConfig::toy();
  c.override_seed(seed);
  c.model.use_utterance_condition = v != Variant::kNoUtterance;
  c.model.use_phoneme_condition = v != Variant::kNoPhoneme;
  c.model.use_cln = v != Variant::kEmbeddingOnly;
  return c;
}

struct Experiment {
  RunConfig run;
  Corpus corpus;
  Checkpoint checkpoint;
  double pretrain_seconds = 0.0;
};

std::map<std::pair<std::uint64_t, Variant>, std::unique_ptr<Experiment>> g_experiments;
std::map<std::uint64_t, std::shared_ptr<Corpus>> g_corpora;

const Corpus& corpus_for(const RunConfig& run) {
  auto& slot = g_corpora[run.corpus.seed];
  if (!slot) slot = std::make_shared<Corpus>(gen_corpus(run.corpus));
  return *slot;
}

const Experiment& experiment(std::uint64_t seed, Variant v) {
  auto& slot = g_experiments[{seed, v}];
  if (!slot) {
    slot = std::make_unique<Experiment>();
    slot->run = toy_run(seed, v);
    slot->run.validate();
    slot->corpus = corpus_for(slot->run);
    const auto t0 = Clock::now();
    slot->checkpoint = pretrain(slot->run.model, slot->run.train, slot->corpus.pretrain_set());
    slot->pretrain_seconds = seconds_since(t0);
    std::printf("  (pretrained seed %llu %s in %.1f s)\n", static_cast<unsigned long long>(seed), variant_name(v),
                slot->pretrain_seconds);
    std::fflush(stdout);
  }
  return *slot;
}

struct AdaptationScore {
  double adapted_free = 0.0;
  double unadapted_free = 0.0;
  double adapted_teacher = 0.0;
  double unadapted_teacher = 0.0;
};

// Adapts every adaptation speaker with k utterances and scores held-out
// utterances. The unadapted model is the same network with the new speaker's
// embedding at its initial value. Utterance 0 of the speaker (an adaptation
// utterance) is the inference reference.
AdaptationScore adapt_and_score(const Experiment& e, int k) {
  AdaptationScore s;
  const auto speakers = e.corpus.adaptation_speakers();
  for (int spk : speakers) {
    const auto r = finetune(e.checkpoint, spk, e.corpus.adaptation_set(spk, k), e.run.train);
    const std::map<int, const SyntheticUtterance*> refs{{spk, &e.corpus.utterance(spk, 0)}};
    EvalOptions opt;
    opt.references = &refs;
    const auto after = evaluate(e.run.model, r.adapted, e.corpus.holdout_set(spk), opt).overall;
    const auto before = evaluate(e.run.model, r.start, e.corpus.holdout_set(spk), opt).overall;
    s.adapted_free += after.free_running_mse;
    s.adapted_teacher += after.teacher_forced_mse;
    s.unadapted_free += before.free_running_mse;
    s.unadapted_teacher += before.teacher_forced_mse;
  }
  const double n = static_cast<double>(speakers.size());
  s.adapted_free /= n;
  s.adapted_teacher /= n;
  s.unadapted_free /= n;
  s.unadapted_teacher /= n;
  return s;
}

// ---------------------------------------------------------------------------

Outcome criterion_counts() {
  const ModelConfig paper = ModelConfig::paper();
  const auto params = init_model_params<float>(paper, 1);
  const std::size_t finetuned = count_params(paper, params, CountScope::kFinetuned, 0);
  const std::size_t deployed = count_params(paper, params, CountScope::kDeployed, 0);
  std::ostringstream os;
  os << "h=256 C=" << paper.cln_sites() << " finetuned=" << finetuned << " deployed=" << deployed;
  return {finetuned == 1179904 && deployed == 4864, os.str()};
}

Outcome criterion_deployment() {
  int identical = 0;
  for (std::uint64_t pair = 0; pair < 20; ++pair) {
    Rng rng(derive_seed(2024, "deployment", pair));
    ModelConfig c = ModelConfig::toy();
    c.hidden = 4 * static_cast<int>(rng.uniform_int(1, 8));
    c.n_decoder_layers = static_cast<int>(rng.uniform_int(1, 4));
    c.n_speakers = static_cast<int>(rng.uniform_int(2, 20));
    c.cln_bias_enabled = rng.uniform() < 0.25;
    const int speaker = static_cast<int>(rng.uniform_int(0, c.n_speakers - 1));
    const auto frames_len = static_cast<std::size_t>(rng.uniform_int(1, 40));
    Tensor<double> frames({frames_len, static_cast<std::size_t>(c.hidden)});
    for (double& v : frames.storage()) v = rng.normal();

    // 64-bit: matrices path vs exported vectors.
    const auto params = init_model_params<double>(c, rng.next_u64());
    const Backbone<double> model(c, params);
    const auto deployed = export_speaker(c, params, speaker);
    Tape<double> t;
    const auto a = model.decode_mel(t.constant(frames), SpeakerCondition<double>::from_embedding(model.speaker_embedding(t, speaker)), nullptr);
    const auto b = model.decode_mel(t.constant(frames), SpeakerCondition<double>::from_deployed(deployed), nullptr);

    // 32-bit: matrices path vs vectors read back from a serialized blob.
    const auto params32 = init_model_params<float>(c, rng.next_u64());
    const Backbone<float> model32(c, params32);
    const auto blob = decode_speaker_blob(encode_speaker_blob(export_speaker(c, params32, speaker)), speaker);
    Tape<float> t32;
    const auto f32 = frames.cast<float>();
    const auto a32 = model32.decode_mel(t32.constant(f32), SpeakerCondition<float>::from_embedding(model32.speaker_embedding(t32, speaker)), nullptr);
    const auto b32 = model32.decode_mel(t32.constant(f32), SpeakerCondition<float>::from_deployed(blob), nullptr);

    if (a.value().storage() == b.value().storage() && a32.value().storage() == b32.value().storage()) ++identical;
  }
  return {identical == 20, std::to_string(identical) + "/20 pairs bit-identical (64-bit in memory and 32-bit via blob)"};
}

Outcome criterion_gradients() {
  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : voxadapt::testing::run_gradient_suite(20)) {
    std::printf("  %-48s seeds %d max rel err %.3e (tol %.0e)%s\n", e.name.c_str(), e.seeds, e.max_rel_error, e.tol,
                e.passed() ? "" : "  FAIL");
    ok = ok && e.passed();
    if (e.max_rel_error >= worst) {
      worst = e.max_rel_error;
      worst_name = e.name;
    }
  }
  const auto full = voxadapt::testing::run_full_model_check(20);
  std::printf("  %-48s seeds %d max rel err %.3e (tol %.0e)%s\n", full.name.c_str(), full.seeds, full.max_rel_error,
              full.tol, full.passed() ? "" : "  FAIL");
  ok = ok && full.passed();
  return {ok, "kernels worst " + fmt("%.2e", worst) + " (" + worst_name + "), full model " + fmt("%.2e", full.max_rel_error)};
}

Outcome criterion_freeze() {
  const Experiment& e = experiment(1, Variant::kFull);
  const int spk = e.corpus.adaptation_speakers().front();
  TrainSchedule s = e.run.train;
  s.finetune_steps = 50;
  const auto r = finetune(e.checkpoint, spk, e.corpus.adaptation_set(spk, e.run.corpus.adaptation_utterances), s);
  std::set<std::string> changed, want{speaker_embedding_name(spk)};
  for (const auto& [name, p] : r.adapted)
    if (!voxadapt::testing::same_bits(p.value, r.start.at(name).value)) changed.insert(name);
  for (int c = 0; c < e.run.model.cln_sites(); ++c) {
    want.insert(cln_site_prefix(e.run.model, c) + ".w_gamma");
    want.insert(cln_site_prefix(e.run.model, c) + ".w_beta");
  }
  bool untouched = true;
  for (const auto& [name, p] : e.checkpoint.params)
    if (!want.count(name) && !voxadapt::testing::same_bits(p.value, r.adapted.at(name).value)) untouched = false;
  std::ostringstream os;
  os << changed.size() << " tensors changed, expected " << want.size() << " (all W_gamma, W_beta, speaker " << spk
     << " embedding)";
  return {changed == want && untouched, os.str()};
}

Outcome criterion_stop_gradient() {
  const Experiment& e = experiment(1, Variant::kFull);
  auto params = e.checkpoint.params;
  params.zero_grad();
  const auto epoch = e.corpus.pretrain_set();
  for (const auto* u : epoch) {
    Tape<float> t;
    const auto l = compute_losses(t, e.run.model, params, *u, LossMode::kPhase2, nullptr);
    t.backward(*l.predictor, params);
  }
  double encoder_abs = 0.0, predictor_abs = 0.0;
  for (const auto& [name, p] : params) {
    double s = 0.0;
    for (float g : p.grad.storage()) s += std::abs(static_cast<double>(g));
    if (name.rfind("acoustic.phoneme_encoder.", 0) == 0) encoder_abs += s;
    if (name.rfind("acoustic.phoneme_predictor.", 0) == 0) predictor_abs += s;
  }
  std::ostringstream os;
  os << epoch.size() << " utterances: sum |grad| phoneme encoder = " << encoder_abs
     << ", phoneme predictor = " << fmt("%.3e", predictor_abs);
  return {encoder_abs == 0.0 && predictor_abs > 0.0, os.str()};
}

Outcome criterion_adaptation() {
  const Experiment& e = experiment(1, Variant::kFull);
  const auto s = adapt_and_score(e, e.run.corpus.adaptation_utterances);
  const double ratio = s.adapted_free / s.unadapted_free;
  return {ratio <= 0.8, "free-running MSE adapted " + fmt("%.5f", s.adapted_free) + " vs unadapted " +
                            fmt("%.5f", s.unadapted_free) + " (ratio " + fmt("%.3f", ratio) + ", teacher-forced " +
                            fmt("%.5f", s.adapted_teacher) + " vs " + fmt("%.5f", s.unadapted_teacher) + ")"};
}

Outcome criterion_ablation() {
  std::map<Variant, std::vector<double>> scores;
  for (std::uint64_t seed : {1, 2, 3})
    for (Variant v : {Variant::kFull, Variant::kNoUtterance, Variant::kNoPhoneme, Variant::kEmbeddingOnly}) {
      const auto& e = experiment(seed, v);
      const auto s = adapt_and_score(e, e.run.corpus.adaptation_utterances);
      std::printf("  seed %llu %-15s adapted free-running %.5f teacher-forced %.5f\n",
                  static_cast<unsigned long long>(seed), variant_name(v), s.adapted_free, s.adapted_teacher);
      scores[v].push_back(s.adapted_free);
    }
  const double full = median3(scores[Variant::kFull]);
  bool ok = true;
  std::string detail = "median full " + fmt("%.5f", full);
  for (Variant v : {Variant::kNoUtterance, Variant::kNoPhoneme, Variant::kEmbeddingOnly}) {
    const double m = median3(scores[v]);
    ok = ok && full <= m;
    detail += std::string(", ") + variant_name(v) + " " + fmt("%.5f", m);
  }
  return {ok, detail};
}

Outcome criterion_varying_k() {
  const std::vector<int> ks{1, 5, 10, 20};
  std::map<int, std::vector<double>> scores;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto& e = experiment(seed, Variant::kFull);
    for (int k : ks) {
      const auto s = adapt_and_score(e, k);
      std::printf("  seed %llu K=%-2d adapted free-running %.5f teacher-forced %.5f\n",
                  static_cast<unsigned long long>(seed), k, s.adapted_free, s.adapted_teacher);
      scores[k].push_back(s.adapted_free);
    }
  }
  std::vector<double> med;
  std::string detail = "median MSE";
  for (int k : ks) {
    med.push_back(median3(scores[k]));
    detail += " K=" + std::to_string(k) + ":" + fmt("%.5f", med.back());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < med.size(); ++i) monotone = monotone && med[i] <= med[i - 1];
  const double gap = med.front() / med.back();
  detail += ", K1/K20 " + fmt("%.3f", gap);
  return {monotone && gap >= 1.1, detail};
}

Outcome criterion_formats() {
  int ok = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Checkpoint ck = voxadapt::testing::random_checkpoint(1000 + s);
    const Bytes ck_bytes = encode_checkpoint(ck);
    const Checkpoint ck_back = decode_checkpoint(ck_bytes);
    const auto d = voxadapt::testing::random_deployed(1000 + s);
    const Bytes d_bytes = encode_speaker_blob(d);
    const auto d_back = decode_speaker_blob(d_bytes, d.speaker);
    if (voxadapt::testing::same_bits(ck.params, ck_back.params) && encode_checkpoint(ck_back) == ck_bytes &&
        to_key_values(ck.config) == to_key_values(ck_back.config) && ck_back.seed == ck.seed &&
        ck_back.step == ck.step && voxadapt::testing::same_bits(d, d_back) && encode_speaker_blob(d_back) == d_bytes)
      ++ok;
  }
  const ModelConfig paper = ModelConfig::paper();
  const auto params = init_model_params<float>(paper, 1);
  const std::size_t blob = encode_speaker_blob(export_speaker(paper, params, 0)).size();
  return {ok == 100 && blob == 19468,
          std::to_string(ok) + "/100 checkpoint+blob round trips bit-exact, paper blob " + std::to_string(blob) + " bytes"};
}

Tensor<float> full_run(const RunConfig& run) {
  const Corpus corpus = gen_corpus(run.corpus);
  const Checkpoint ck = pretrain(run.model, run.train, corpus.pretrain_set());
  const int spk = corpus.adaptation_speakers().front();
  const auto r = finetune(ck, spk, corpus.adaptation_set(spk, run.corpus.adaptation_utterances), run.train);
  const auto deployed = export_speaker(run.model, r.adapted, spk);
  const SyntheticUtterance* target = corpus.holdout_set(spk).front();
  return infer<float>(run.model, r.adapted, {spk, &deployed}, target->phonemes, &corpus.utterance(spk, 0).mel);
}

Outcome criterion_determinism() {
  const RunConfig run = toy_run(7, Variant::kFull);
  const auto a = full_run(run);
  const auto b = full_run(run);
  std::ostringstream os;
  os << "two seed-7 pretrain+finetune+infer runs: " << a.rows() << "x" << a.cols() << " mel, "
     << (voxadapt::testing::same_bits(a, b) ? "bit-identical" : "different");
  return {voxadapt::testing::same_bits(a, b), os.str()};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "parameter-count exactness", 10, criterion_counts},
      {2, "deployment equivalence", 30, criterion_deployment},
      {3, "gradient suite", 300, criterion_gradients},
      {4, "freeze exactness", 60, criterion_freeze},
      {5, "stop-gradient exactness", 60, criterion_stop_gradient},
      {6, "adaptation efficacy", 600, criterion_adaptation},
      {7, "ablation ordering", 1800, criterion_ablation},
      {8, "varying-K trend", 1800, criterion_varying_k},
      {9, "format round trips", 30, criterion_formats},
      {10, "determinism", 1200, criterion_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  std::vector<std::string> summary;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::printf("criterion %d: %s\n", c.id, c.name);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    // Time spent inside this criterion, including any pretraining it triggered.
    const bool in_budget = secs <= c.budget_seconds;
    const bool pass = o.passed && in_budget;
    if (!pass) ++failures;
    char line[1024];
    std::snprintf(line, sizeof(line), "[%s] %2d %-26s %s; %.1f s (budget %.0f s)", pass ? "PASS" : "FAIL", c.id, c.name,
                  o.detail.c_str(), secs, c.budget_seconds);
    std::printf("%s\n", line);
    std::fflush(stdout);
    summary.emplace_back(line);
  }
  std::printf("\nsummary\n");
  for (const auto& l : summary) std::printf("%s\n", l.c_str());
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
