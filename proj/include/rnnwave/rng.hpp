// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace rnnwave {

/// SplitMix64 (Steele, Lea, Flood). Weight initialization and test-input
/// generation run on dedicated streams of this generator so every artifact
/// is reproducible from a single 64-bit seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform float in [-range, range], computed in double then rounded once.
  float next_symmetric(double range) {
    return static_cast<float>((2.0 * next_unit() - 1.0) * range);
  }

 private:
  std::uint64_t state_;
};

/// The SplitMix64 output mix on its own (no state increment).
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Stream k derived from `seed`: the stream's initial state is the SplitMix64
/// mix of (seed + k * 0x9E3779B97F4A7C15). Distinct streams land at unrelated
/// points of the state space, so the per-tensor draws never overlap.
inline SplitMix64 split_stream(std::uint64_t seed, std::uint64_t stream_index) {
  return SplitMix64(splitmix64_mix(seed + stream_index * 0x9E3779B97F4A7C15ull));
}

}  // namespace rnnwave
