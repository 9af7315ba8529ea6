// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every command exits 0 on success; failures print a
// single "error: <code>: <message>" line on stderr and exit nonzero.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "voxadapt/acoustic.hpp"
#include "voxadapt/io.hpp"
#include "voxadapt/run_config.hpp"
#include "voxadapt/text_format.hpp"

namespace fs = std::filesystem;
using namespace voxadapt;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

RunConfig run_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig::paper() : load_run_config(g.config);
  if (g.seed) c.override_seed(*g.seed);
  c.validate();
  return c;
}

const std::string& need_out(const Globals& g) {
  require(!g.out.empty(), ErrorCode::kInvalidArgument, "--out is required");
  return g.out;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void check_corpus_matches(const ModelConfig& m, const CorpusSpec& s) {
  require(m.mel_dim == s.mel_dim && m.phoneme_vocab == s.phoneme_vocab, ErrorCode::kConfig,
          "corpus mel width or vocabulary does not match the model");
}

class LossLog {
 public:
  LossLog(bool quiet, int every) : quiet_(quiet), every_(every) {
    text_ << "# step phase mel duration pitch energy predictor total\n";
  }
  void operator()(const LossRecord& r) {
    const std::string line = std::to_string(r.step) + ' ' + std::to_string(r.phase) + ' ' + format_real(r.mel) +
                             ' ' + format_real(r.duration) + ' ' + format_real(r.pitch) + ' ' +
                             format_real(r.energy) + ' ' + format_real(r.predictor) + ' ' + format_real(r.total);
    text_ << line << '\n';
    if (!quiet_ && every_ > 0 && r.step % every_ == 0) std::cout << line << '\n' << std::flush;
  }
  std::string str() const { return text_.str(); }

 private:
  bool quiet_;
  int every_;
  std::ostringstream text_;
};

std::vector<int> read_phonemes(const fs::path& path) {
  const Bytes b = read_file(path);
  std::istringstream in(std::string(b.begin(), b.end()));
  std::vector<int> ids;
  std::string tok;
  while (in >> tok) ids.push_back(parse_int(tok, "phoneme id"));
  require(!ids.empty(), ErrorCode::kInvalidArgument, "phoneme file " + path.string() + " is empty");
  return ids;
}

std::map<int, const SyntheticUtterance*> first_utterances(const Corpus& corpus) {
  // Lowest utterance id of each speaker is the deterministic reference.
  std::map<int, const SyntheticUtterance*> refs;
  for (int s = 0; s < corpus.spec.n_speakers; ++s) refs[s] = &corpus.utterance(s, 0);
  return refs;
}

void inspect_counts(const ModelConfig& config, const ParameterSet<float>& params, int speaker, std::ostream& os) {
  const std::size_t total = count_params(config, params, CountScope::kTotal, speaker);
  const std::size_t finetuned = count_params(config, params, CountScope::kFinetuned, speaker);
  os << "hidden " << config.hidden << "\ncln_sites " << config.cln_sites() << "\ntotal " << total
     << "\nfinetuned " << finetuned << '\n';
  const auto h = static_cast<std::size_t>(config.hidden);
  const auto c = static_cast<std::size_t>(config.cln_sites());
  if (config.use_cln) {
    const std::size_t deployed = count_params(config, params, CountScope::kDeployed, speaker);
    os << "deployed " << deployed << '\n';
    if (!config.cln_bias_enabled) {
      // The closed forms are the oracle; the counts above come from the tables.
      const std::size_t f_formula = 2 * h * h * c + h;
      const std::size_t d_formula = 2 * h * c + h;
      require(finetuned == f_formula && deployed == d_formula, ErrorCode::kState,
              "walked counts disagree with 2h^2C+h = " + std::to_string(f_formula) +
                  " / 2hC+h = " + std::to_string(d_formula));
      os << "formula_check ok\n";
    }
    os << "blob_bytes " << speaker_blob_size(h, c) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker adaptation with conditional layer norm: corpus, training, export and inference"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config, "Run configuration file (key=value)");
  auto* seed_opt = app.add_option("--seed", seed_value, "Overrides train.seed and corpus.seed");
  app.add_option("--out", g.out, "Output path");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string corpus_dir, checkpoint_path, blob_path, phoneme_path, reference_path, log_path;
  int speaker = -1, k = -1;
  std::vector<int> speakers;

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus directory");

  auto* pre = app.add_subcommand("pretrain", "Two-phase pretraining; writes a checkpoint and a loss log");
  pre->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  pre->add_option("--log", log_path, "Loss log path (default <out>.loss.txt)");

  auto* fin = app.add_subcommand("finetune", "Adapt to one speaker; writes the adapted checkpoint");
  fin->add_option("--checkpoint", checkpoint_path, "Pretrained checkpoint")->required();
  fin->add_option("--corpus", corpus_dir, "Corpus directory holding the speaker's data")->required();
  fin->add_option("--speaker", speaker, "Adaptation speaker id")->required();
  fin->add_option("--k", k, "Adaptation utterances (default corpus.adaptation_utterances)");
  fin->add_option("--log", log_path, "Loss log path (default <out>.loss.txt)");

  auto* exp = app.add_subcommand("export-speaker", "Write deployed speaker parameters as a blob");
  exp->add_option("--checkpoint", checkpoint_path, "Adapted checkpoint")->required();
  exp->add_option("--speaker", speaker, "Speaker id")->required();

  auto* inf = app.add_subcommand("infer", "Synthesize a mel matrix");
  inf->add_option("--checkpoint", checkpoint_path, "Shared checkpoint")->required();
  inf->add_option("--blob", blob_path, "Deployed speaker blob");
  inf->add_option("--speaker", speaker, "Speaker id (table mode, or to pick the reference)");
  inf->add_option("--phonemes", phoneme_path, "File of whitespace-separated phoneme ids")->required();
  inf->add_option("--reference", reference_path, "Reference utterance record");
  inf->add_option("--corpus", corpus_dir, "Corpus directory for the default reference");

  auto* ev = app.add_subcommand("eval", "Held-out metrics report");
  ev->add_option("--checkpoint", checkpoint_path, "Checkpoint")->required();
  ev->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  ev->add_option("--speaker", speakers, "Speakers to evaluate (default: adaptation speakers)");
  ev->add_option("--blob", blob_path, "Deployed blob for the single evaluated speaker");
  ev->add_option("--k", k, "Adaptation size to report (default corpus.adaptation_utterances)");

  auto* ins = app.add_subcommand("inspect", "Parameter counts by scope, checked against closed forms");
  ins->add_option("--checkpoint", checkpoint_path, "Checkpoint to walk");
  ins->add_option("--blob", blob_path, "Speaker blob to check");
  ins->add_option("--speaker", speaker, "Speaker whose scope is counted (default 0)");

  auto* dump = app.add_subcommand("dump-utterance-vectors", "One utterance vector per row, tagged by speaker");
  dump->add_option("--checkpoint", checkpoint_path, "Checkpoint")->required();
  dump->add_option("--corpus", corpus_dir, "Corpus directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (gen->parsed()) {
      const RunConfig cfg = run_config(g);
      const Corpus corpus = gen_corpus(cfg.corpus);
      save_corpus(need_out(g), corpus);
      if (!g.quiet) std::cout << "wrote " << corpus.utterances.size() << " utterances to " << g.out << '\n';
    } else if (pre->parsed()) {
      const RunConfig cfg = run_config(g);
      const Corpus corpus = load_corpus(corpus_dir);
      check_corpus_matches(cfg.model, corpus.spec);
      LossLog log(g.quiet, 100);
      const Checkpoint ck = pretrain(cfg.model, cfg.train, corpus.pretrain_set(), std::ref(log));
      save_checkpoint(need_out(g), ck);
      write_text(log_path.empty() ? g.out + ".loss.txt" : log_path, log.str());
    } else if (fin->parsed()) {
      const RunConfig cfg = run_config(g);
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      const Corpus corpus = load_corpus(corpus_dir);
      check_corpus_matches(ck.config, corpus.spec);
      const int kk = k < 0 ? corpus.spec.adaptation_utterances : k;
      LossLog log(g.quiet, 50);
      const FinetuneResult r = finetune(ck, speaker, corpus.adaptation_set(speaker, kk), cfg.train, std::ref(log));
      save_checkpoint(need_out(g), Checkpoint{ck.config, r.adapted, ck.seed, ck.step + cfg.train.finetune_steps});
      write_text(log_path.empty() ? g.out + ".loss.txt" : log_path, log.str());
    } else if (exp->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      save_speaker_blob(need_out(g), export_speaker(ck.config, ck.params, speaker));
    } else if (inf->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      std::optional<DeployedSpeakerParams<float>> deployed;
      if (!blob_path.empty()) deployed = load_speaker_blob(blob_path, speaker);
      require(deployed.has_value() || speaker >= 0, ErrorCode::kInvalidArgument, "infer needs --blob or --speaker");
      std::optional<Tensor<float>> reference;
      if (!reference_path.empty()) {
        reference = decode_utterance(read_file(reference_path)).mel;
      } else if (!corpus_dir.empty()) {
        require(speaker >= 0, ErrorCode::kInvalidArgument, "--corpus reference selection needs --speaker");
        reference = load_corpus(corpus_dir).utterance(speaker, 0).mel;
      }
      const InferSpeaker<float> who{speaker, deployed ? &*deployed : nullptr};
      const Tensor<float> mel =
          infer(ck.config, ck.params, who, read_phonemes(phoneme_path), reference ? &*reference : nullptr);
      write_file(need_out(g), encode_mel(mel));
      if (!g.quiet) std::cout << "frames " << mel.rows() << " mel_dim " << mel.cols() << '\n';
    } else if (ev->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      const Corpus corpus = load_corpus(corpus_dir);
      check_corpus_matches(ck.config, corpus.spec);
      if (speakers.empty()) speakers = corpus.adaptation_speakers();
      std::map<int, DeployedSpeakerParams<float>> deployed;
      if (!blob_path.empty()) {
        require(speakers.size() == 1, ErrorCode::kInvalidArgument, "--blob needs exactly one --speaker");
        deployed.emplace(speakers[0], load_speaker_blob(blob_path, speakers[0]));
      }
      UtteranceSet test;
      for (const int s : speakers)
        for (const auto* u : corpus.holdout_set(s)) test.push_back(u);
      const auto refs = first_utterances(corpus);
      EvalOptions opt;
      opt.deployed = &deployed;
      opt.references = &refs;
      const EvalReport rep = evaluate(ck.config, ck.params, test, opt);
      const int kk = k < 0 ? corpus.spec.adaptation_utterances : k;
      std::ostringstream os;
      os << "# speaker K teacher_forced_mse free_running_mse duration_accuracy utterances\n";
      const auto row = [&](const std::string& who, const SpeakerMetrics& m) {
        os << who << ' ' << kk << ' ' << format_real(m.teacher_forced_mse) << ' ' << format_real(m.free_running_mse)
           << ' ' << format_real(m.duration_accuracy) << ' ' << m.utterances << '\n';
      };
      for (const SpeakerMetrics& m : rep.speakers) row(std::to_string(m.speaker), m);
      row("all", rep.overall);
      write_text(need_out(g), os.str());
      if (!g.quiet) std::cout << os.str();
    } else if (ins->parsed()) {
      std::ostringstream os;
      if (!blob_path.empty()) {
        const Bytes bytes = read_file(blob_path);
        const DeployedSpeakerParams<float> p = decode_speaker_blob(bytes);
        os << "hidden " << p.embedding.size() << "\ncln_sites " << p.gammas.size() << "\ndeployed "
           << p.scalar_count() << "\nblob_bytes " << bytes.size() << '\n';
      } else if (!checkpoint_path.empty()) {
        const Checkpoint ck = load_checkpoint(checkpoint_path);
        inspect_counts(ck.config, ck.params, speaker < 0 ? 0 : speaker, os);
      } else {
        const RunConfig cfg = run_config(g);
        const ParameterSet<float> params = init_model_params<float>(cfg.model, cfg.train.seed);
        inspect_counts(cfg.model, params, speaker < 0 ? 0 : speaker, os);
      }
      if (!g.out.empty()) write_text(g.out, os.str());
      std::cout << os.str();
    } else if (dump->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      const Corpus corpus = load_corpus(corpus_dir);
      check_corpus_matches(ck.config, corpus.spec);
      const AcousticConditioner<float> acoustic(ck.config, ck.params);
      std::ostringstream os;
      os << "# speaker utterance vector[" << ck.config.hidden << "]\n";
      for (const SyntheticUtterance& u : corpus.utterances) {
        Tape<float> tape;
        const Tensor<float>& v = acoustic.utterance_encode(tape.borrow(u.mel), nullptr).value();
        os << u.speaker << ' ' << u.index;
        for (const float x : v.storage()) os << ' ' << format_real(x);
        os << '\n';
      }
      write_text(need_out(g), os.str());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
