// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace voxadapt {

/// splitmix64 finalizer; used to mix stream names and indices into seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent child seed from a parent seed and a stream name.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream, std::uint64_t index);

/// mt19937_64 with distribution code written out here so draws are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal (Box-Muller, one draw per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace voxadapt
