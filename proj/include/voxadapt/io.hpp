// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary formats. Every file starts with a 4-byte magic and a
// version; readers reject anything they do not fully understand.
//
//   tensor record : u32 name length, name bytes, u32 rank, u32 dims[rank],
//                   f32 data[prod(dims)]
//   checkpoint    : "ADCK", u32 version, u32 config length, config text,
//                   u32 count, records sorted by name
//   speaker blob  : "ADSP", u16 version, u16 h, u16 C, u16 0,
//                   f32 (gamma_c, beta_c for c = 1..C, then embedding)
//   utterance     : "ADUT", u32 version, u32 count, records
//   mel           : "ADML", u32 version, u32 count = 1, one unnamed record
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxadapt/corpus.hpp"
#include "voxadapt/pipeline.hpp"

namespace voxadapt {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint16_t kSpeakerBlobVersion = 1;
inline constexpr std::uint32_t kUtteranceVersion = 1;
inline constexpr std::uint32_t kMelVersion = 1;
inline constexpr std::size_t kSpeakerBlobHeaderBytes = 12;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Bytes encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The blob carries no speaker id; decode sets the given one.
Bytes encode_speaker_blob(const DeployedSpeakerParams<float>& params);
DeployedSpeakerParams<float> decode_speaker_blob(std::span<const std::uint8_t> bytes, int speaker = -1);
void save_speaker_blob(const std::filesystem::path& path, const DeployedSpeakerParams<float>& params);
DeployedSpeakerParams<float> load_speaker_blob(const std::filesystem::path& path, int speaker = -1);
/// 12 + 4 (2hC + h).
std::size_t speaker_blob_size(std::size_t h, std::size_t sites);

/// Pitch, energy, gain and tilt are stored as 32-bit floats.
Bytes encode_utterance(const SyntheticUtterance& u);
SyntheticUtterance decode_utterance(std::span<const std::uint8_t> bytes);

Bytes encode_mel(const Tensor<float>& mel);
Tensor<float> decode_mel(std::span<const std::uint8_t> bytes);

/// corpus.cfg (spec keys), manifest.txt ("speaker utterance L T" per line)
/// and one spkSSSS_uttUUUU.adut record per utterance.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
/// Reloads a saved corpus. Speaker profiles are regenerated from the spec.
Corpus load_corpus(const std::filesystem::path& dir);
std::string utterance_file_name(int speaker, int index);

}  // namespace voxadapt
