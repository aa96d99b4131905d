// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace molbench {

/// Seedable generator with platform-independent integer output.
///
/// The raw stream comes from std::mt19937_64, whose output sequence is fixed
/// by the standard. All conversions (bounded integers, unit doubles, normals)
/// are done here rather than through <random> distributions, which are
/// implementation-defined. Integer-only consumers (splits, permutations) are
/// therefore bit-identical everywhere; normals depend on libm log/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  double normal();

  /// Normal(0, stddev) redrawn until |x| <= 2 * stddev.
  double truncated_normal(double stddev);

 private:
  std::mt19937_64 engine_;
};

/// Mixes two 64-bit values (splitmix64 finalizer over a + golden-ratio * b).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Keyed seed derivation: FNV-1a over key, then mixed with master.
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);

/// Fisher-Yates shuffle driven by Rng::below.
void shuffle(std::span<std::size_t> values, Rng& rng);

}  // namespace molbench
