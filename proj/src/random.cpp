// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/random.hpp"

#include <cmath>
#include <numbers>

namespace voxadapt {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) {
  // FNV-1a over the stream name, then mixed with the parent.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(parent) ^ h);
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream, std::uint64_t index) {
  return mix64(derive_seed(parent, stream) + mix64(index));
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Modulo bias is below 2^-40 for the small ranges used here.
  return lo + static_cast<std::int64_t>(engine_() % span);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace voxadapt
