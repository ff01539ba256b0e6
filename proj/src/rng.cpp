// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phantomdiff {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + index * 0x9E3779B97F4A7C15ULL + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double NoiseStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NoiseStream::normal() {
  // u1 in (0,1] so the log is finite; u2 in [0,1).
  double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t NoiseStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  // Rejection-free modulo is fine here: spans are tiny vs 2^64.
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(engine_() % span);
}

void NoiseStream::fill_normal(ImageGrid& g) {
  for (auto& v : g.values()) v = normal();
}

NoiseDraw NoiseDraw::make(int width, int height, std::uint64_t seed) {
  NoiseDraw d{ImageGrid(width, height, ValueRange::Normalized), seed};
  NoiseStream stream(seed);
  stream.fill_normal(d.grid);
  return d;
}

NoiseDraw NoiseDraw::zeros(int width, int height) {
  return NoiseDraw{ImageGrid(width, height, ValueRange::Normalized), 0};
}

}  // namespace phantomdiff
