// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "phantomdiff/image.hpp"

namespace phantomdiff {

/// Derive an independent stream seed from a master seed and an index.
/// splitmix64 finalizer over master + index * golden gamma; O(1) per call.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Seeded noise stream with a fixed, documented draw discipline.
///
/// Every normal draw consumes exactly two 64-bit engine words (Box-Muller,
/// cosine branch, no caching), so consumers that skip draws stay aligned
/// with consumers that take them. Samplers rely on this to make guided and
/// unguided chains comparable seed-for-seed.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal draw.
  double normal();
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Fill a grid with i.i.d. standard normals, row-major order.
  void fill_normal(ImageGrid& g);

 private:
  std::mt19937_64 engine_;
};

/// ImageGrid of i.i.d. standard normal draws, reproducible from its seed.
struct NoiseDraw {
  ImageGrid grid;
  std::uint64_t seed = 0;

  static NoiseDraw make(int width, int height, std::uint64_t seed);
  static NoiseDraw zeros(int width, int height);
};

}  // namespace phantomdiff
