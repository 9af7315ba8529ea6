// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "voxadapt/text_format.hpp"

namespace voxadapt {
namespace {

constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void magic(const char* m) { bytes(m, 4); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void text(const std::string& s) {
    require(s.size() <= 0xffffffffu, ErrorCode::kFormat, "string too long to encode");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void record(const std::string& name, const Tensor<float>& t) {
    require(name.size() <= kMaxNameLength, ErrorCode::kFormat, "tensor name too long: " + name);
    require(t.rank() <= kMaxRank, ErrorCode::kFormat, "tensor rank too large for " + name);
    text(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (const std::size_t d : t.shape()) {
      require(d <= 0xffffffffu, ErrorCode::kFormat, "tensor dimension too large for " + name);
      u32(static_cast<std::uint32_t>(d));
    }
    for (const float v : t.storage()) f32(v);
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string what) : data_(data), what_(std::move(what)) {}

  void need(std::size_t n) const {
    require(data_.size() - pos_ >= n, ErrorCode::kFormat,
            what_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + " more)");
  }
  void magic(const char* m) {
    need(4);
    require(std::memcmp(data_.data() + pos_, m, 4) == 0, ErrorCode::kFormat,
            what_ + ": bad magic, expected \"" + std::string(m, 4) + "\"");
    pos_ += 4;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v = static_cast<std::uint16_t>(v | (data_[pos_ + i] << (8 * i)));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text(std::uint32_t limit) {
    const std::uint32_t n = u32();
    require(n <= limit, ErrorCode::kFormat, what_ + ": string length " + std::to_string(n) + " exceeds limit");
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor<float>> record() {
    std::string name = text(kMaxNameLength);
    const std::uint32_t rank = u32();
    require(rank <= kMaxRank, ErrorCode::kFormat, what_ + ": rank " + std::to_string(rank) + " of " + name);
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(u32());
      // Bound the element count by the bytes left so corrupt dims cannot
      // trigger huge allocations.
      require(shape.back() == 0 || count <= (data_.size() - pos_) / 4 / shape.back(), ErrorCode::kFormat,
              what_ + ": tensor " + name + " larger than the file");
      count *= shape.back();
    }
    need(4 * count);
    std::vector<float> values(count);
    for (float& v : values) v = f32();
    return {std::move(name), Tensor<float>(std::move(shape), std::move(values))};
  }
  void version(std::uint32_t got, std::uint32_t expected) const {
    require(got == expected, ErrorCode::kFormat,
            what_ + ": unsupported version " + std::to_string(got) + " (expected " + std::to_string(expected) + ")");
  }
  void finish() const {
    require(pos_ == data_.size(), ErrorCode::kFormat,
            what_ + ": " + std::to_string(data_.size() - pos_) + " trailing bytes");
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::map<std::string, std::string> checkpoint_header(const Checkpoint& ck) {
  auto kv = to_key_values(ck.config);
  kv["checkpoint.seed"] = std::to_string(ck.seed);
  kv["checkpoint.step"] = std::to_string(ck.step);
  return kv;
}

Tensor<float> row_of(const std::vector<double>& v) {
  Tensor<float> t({1, v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

Tensor<float> row_of(const std::vector<int>& v) {
  Tensor<float> t({1, v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

std::vector<int> ints_of(const Tensor<float>& t, const std::string& what) {
  std::vector<int> out;
  for (const float v : t.storage()) {
    require(v == static_cast<float>(static_cast<int>(v)), ErrorCode::kFormat, what + " holds a non-integer");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> doubles_of(const Tensor<float>& t) {
  std::vector<double> out;
  for (const float v : t.storage()) out.push_back(static_cast<double>(v));
  return out;
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::kIo, "read failed: " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

Bytes encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.magic("ADCK");
  w.u32(kCheckpointVersion);
  w.text(format_key_value_text(checkpoint_header(ck)));
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  // ParameterSet iterates in byte-wise name order.
  for (const auto& [name, p] : ck.params) w.record(name, p.value);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.magic("ADCK");
  r.version(r.u32(), kCheckpointVersion);
  const auto kv = parse_key_value_text(r.text(1u << 20));
  Checkpoint ck;
  bool has_seed = false, has_step = false;
  for (const auto& [key, value] : kv) {
    if (key == "checkpoint.seed") {
      ck.seed = parse_u64(value, key);
      has_seed = true;
    } else if (key == "checkpoint.step") {
      ck.step = parse_int(value, key);
      has_step = true;
    } else {
      require(apply_key_value(ck.config, key, value), ErrorCode::kFormat, "checkpoint: unknown config key " + key);
    }
  }
  require(has_seed && has_step, ErrorCode::kFormat, "checkpoint: missing seed or step");
  ck.config.validate();
  const std::uint32_t count = r.u32();
  std::string previous;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, value] = r.record();
    require(i == 0 || previous < name, ErrorCode::kFormat, "checkpoint: entries not in sorted order at " + name);
    previous = name;
    ck.params.add(name, std::move(value));
  }
  r.finish();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::size_t speaker_blob_size(std::size_t h, std::size_t sites) {
  return kSpeakerBlobHeaderBytes + 4 * (2 * h * sites + h);
}

Bytes encode_speaker_blob(const DeployedSpeakerParams<float>& p) {
  const std::size_t h = p.embedding.size();
  const std::size_t sites = p.gammas.size();
  require(h > 0 && h <= 0xffff && sites <= 0xffff, ErrorCode::kFormat,
          "speaker blob: h and C must fit in 16 bits");
  require(p.betas.size() == sites && p.embedding.shape() == Shape{1, h}, ErrorCode::kShapeMismatch,
          "speaker blob: inconsistent deployed parameters");
  Writer w;
  w.magic("ADSP");
  w.u16(kSpeakerBlobVersion);
  w.u16(static_cast<std::uint16_t>(h));
  w.u16(static_cast<std::uint16_t>(sites));
  w.u16(0);
  for (std::size_t c = 0; c < sites; ++c) {
    require(p.gammas[c].shape() == Shape{1, h} && p.betas[c].shape() == Shape{1, h}, ErrorCode::kShapeMismatch,
            "speaker blob: site vectors must be [1x" + std::to_string(h) + "]");
    for (const float v : p.gammas[c].storage()) w.f32(v);
    for (const float v : p.betas[c].storage()) w.f32(v);
  }
  for (const float v : p.embedding.storage()) w.f32(v);
  return w.take();
}

DeployedSpeakerParams<float> decode_speaker_blob(std::span<const std::uint8_t> bytes, int speaker) {
  Reader r(bytes, "speaker blob");
  r.magic("ADSP");
  r.version(r.u16(), kSpeakerBlobVersion);
  const std::size_t h = r.u16();
  const std::size_t sites = r.u16();
  require(r.u16() == 0, ErrorCode::kFormat, "speaker blob: reserved field is not zero");
  require(h > 0, ErrorCode::kFormat, "speaker blob: h is zero");
  require(bytes.size() == speaker_blob_size(h, sites), ErrorCode::kFormat,
          "speaker blob: size " + std::to_string(bytes.size()) + " does not match h=" + std::to_string(h) +
              ", C=" + std::to_string(sites));
  const auto vec = [&] {
    Tensor<float> t({1, h});
    for (float& v : t.storage()) v = r.f32();
    return t;
  };
  DeployedSpeakerParams<float> p;
  p.speaker = speaker;
  for (std::size_t c = 0; c < sites; ++c) {
    p.gammas.push_back(vec());
    p.betas.push_back(vec());
  }
  p.embedding = vec();
  r.finish();
  return p;
}

void save_speaker_blob(const std::filesystem::path& path, const DeployedSpeakerParams<float>& p) {
  write_file(path, encode_speaker_blob(p));
}

DeployedSpeakerParams<float> load_speaker_blob(const std::filesystem::path& path, int speaker) {
  return decode_speaker_blob(read_file(path), speaker);
}

Bytes encode_utterance(const SyntheticUtterance& u) {
  Writer w;
  w.magic("ADUT");
  w.u32(kUtteranceVersion);
  // Sorted names, like the checkpoint table.
  const std::vector<std::pair<std::string, Tensor<float>>> entries{
      {"durations", row_of(u.durations)},
      {"energy", row_of(u.energy)},
      {"mel", u.mel},
      {"meta", row_of(std::vector<double>{static_cast<double>(u.speaker), static_cast<double>(u.index), u.gain,
                                          u.tilt})},
      {"phonemes", row_of(u.phonemes)},
      {"pitch", row_of(u.pitch)},
  };
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) w.record(name, t);
  return w.take();
}

SyntheticUtterance decode_utterance(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "utterance record");
  r.magic("ADUT");
  r.version(r.u32(), kUtteranceVersion);
  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor<float>> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.record();
    require(entries.emplace(name, std::move(t)).second, ErrorCode::kFormat, "utterance record: duplicate " + name);
  }
  r.finish();
  for (const char* key : {"durations", "energy", "mel", "meta", "phonemes", "pitch"})
    require(entries.count(key) == 1, ErrorCode::kFormat, std::string("utterance record: missing ") + key);
  require(entries.size() == 6, ErrorCode::kFormat, "utterance record: unexpected entries");
  const Tensor<float>& meta = entries.at("meta");
  require(meta.size() == 4, ErrorCode::kFormat, "utterance record: meta must hold 4 values");
  SyntheticUtterance u;
  const std::vector<int> ids = ints_of(Tensor<float>({1, 2}, std::vector<float>{meta[0], meta[1]}), "meta");
  u.speaker = ids[0];
  u.index = ids[1];
  u.gain = meta[2];
  u.tilt = meta[3];
  u.phonemes = ints_of(entries.at("phonemes"), "phonemes");
  u.durations = ints_of(entries.at("durations"), "durations");
  u.pitch = doubles_of(entries.at("pitch"));
  u.energy = doubles_of(entries.at("energy"));
  u.mel = std::move(entries.at("mel"));
  require(u.mel.rank() == 2, ErrorCode::kFormat, "utterance record: mel must be a matrix");
  const std::size_t len = u.phonemes.size();
  require(u.durations.size() == len && u.pitch.size() == len && u.energy.size() == len, ErrorCode::kFormat,
          "utterance record: per-phoneme lengths differ");
  long total = 0;
  for (const int d : u.durations) total += d;
  require(total == static_cast<long>(u.mel.rows()), ErrorCode::kFormat,
          "utterance record: durations do not sum to the frame count");
  return u;
}

Bytes encode_mel(const Tensor<float>& mel) {
  require(mel.rank() == 2, ErrorCode::kShapeMismatch, "mel output must be a matrix");
  Writer w;
  w.magic("ADML");
  w.u32(kMelVersion);
  w.u32(1);
  w.record("", mel);
  return w.take();
}

Tensor<float> decode_mel(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "mel file");
  r.magic("ADML");
  r.version(r.u32(), kMelVersion);
  require(r.u32() == 1, ErrorCode::kFormat, "mel file: expected exactly one record");
  auto [name, t] = r.record();
  require(name.empty() && t.rank() == 2, ErrorCode::kFormat, "mel file: expected one unnamed matrix");
  r.finish();
  return t;
}

std::string utterance_file_name(int speaker, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%04d_utt%04d.adut", speaker, index);
  return buf;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  const std::string cfg = format_key_value_text(to_key_values(corpus.spec));
  write_file(dir / "corpus.cfg", std::span(reinterpret_cast<const std::uint8_t*>(cfg.data()), cfg.size()));
  std::ostringstream manifest;
  for (const SyntheticUtterance& u : corpus.utterances) {
    manifest << u.speaker << ' ' << u.index << ' ' << u.phonemes.size() << ' ' << u.frames() << '\n';
    write_file(dir / utterance_file_name(u.speaker, u.index), encode_utterance(u));
  }
  const std::string m = manifest.str();
  write_file(dir / "manifest.txt", std::span(reinterpret_cast<const std::uint8_t*>(m.data()), m.size()));
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const Bytes cfg = read_file(dir / "corpus.cfg");
  Corpus c;
  for (const auto& [key, value] : parse_key_value_text(std::string(cfg.begin(), cfg.end())))
    require(apply_key_value(c.spec, key, value), ErrorCode::kFormat, "corpus.cfg: unknown key " + key);
  c.spec.validate();
  for (int s = 0; s < c.spec.n_speakers; ++s) c.speakers.push_back(gen_speaker(c.spec, s));

  const Bytes manifest = read_file(dir / "manifest.txt");
  std::istringstream lines(std::string(manifest.begin(), manifest.end()));
  std::string line;
  int expected = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    int speaker = -1, index = -1;
    std::size_t len = 0, frames = 0;
    require(static_cast<bool>(fields >> speaker >> index >> len >> frames), ErrorCode::kFormat,
            "manifest.txt: malformed line \"" + line + "\"");
    require(speaker == expected / c.spec.utterances_per_speaker && index == expected % c.spec.utterances_per_speaker,
            ErrorCode::kFormat, "manifest.txt: utterances out of order at \"" + line + "\"");
    SyntheticUtterance u = decode_utterance(read_file(dir / utterance_file_name(speaker, index)));
    require(u.speaker == speaker && u.index == index && u.phonemes.size() == len &&
                static_cast<std::size_t>(u.frames()) == frames,
            ErrorCode::kFormat, "manifest.txt disagrees with record " + utterance_file_name(speaker, index));
    require(u.mel.cols() == static_cast<std::size_t>(c.spec.mel_dim), ErrorCode::kFormat,
            "record " + utterance_file_name(speaker, index) + " has the wrong mel width");
    c.utterances.push_back(std::move(u));
    ++expected;
  }
  require(expected == c.spec.n_speakers * c.spec.utterances_per_speaker, ErrorCode::kFormat,
          "manifest.txt lists " + std::to_string(expected) + " utterances, corpus.cfg implies " +
              std::to_string(c.spec.n_speakers * c.spec.utterances_per_speaker));
  return c;
}

}  // namespace voxadapt
