#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace rrm {

// Identifies one deterministic random stream. Equal keys yield identical
// streams on every platform; distinct stream indices yield streams that are
// independent for all practical purposes.
struct SeedKey {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;

  friend bool operator==(const SeedKey&, const SeedKey&) = default;

  // Child key for a named substream. Distinct (tag, index) pairs map to
  // distinct stream indices: index is added after the final mix, so it is
  // injective for a fixed tag, and tags are separated by the mix itself.
  [[nodiscard]] SeedKey derive(std::uint64_t tag, std::uint64_t index = 0) const;
};

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer. Bijective on 64-bit words; serves as the block
// function of the counter-based stream below.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline SeedKey SeedKey::derive(std::uint64_t tag, std::uint64_t index) const {
  return {master_seed, mix64(stream_index ^ mix64(tag ^ 0x5851F42D4C957F2Dull)) + index};
}

// Counter-based generator: draw n is a pure function of (key, n), so streams
// can be split and replayed without any shared mutable state.
class SeededStream {
 public:
  explicit SeededStream(SeedKey key)
      : base_(mix64(key.master_seed + kGolden) ^ mix64(~key.stream_index)) {}

  std::uint64_t next_u64() { return mix64(base_ + kGolden * ++counter_); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller; consumes exactly two words per call so
  // the draw counter stays a pure function of the call sequence.
  double gaussian() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Circularly symmetric complex normal with unit total variance.
  std::complex<double> cgaussian() {
    const double re = gaussian();
    const double im = gaussian();
    return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
  }

 private:
  std::uint64_t base_ = 0;
  std::uint64_t counter_ = 0;
};

// Stream tags used across the library. Centralized so substreams never
// collide between modules.
namespace streams {
inline constexpr std::uint64_t kInstance = 1;
inline constexpr std::uint64_t kLabel = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kTrial = 5;
inline constexpr std::uint64_t kNoise = 6;
inline constexpr std::uint64_t kSymbol = 7;
inline constexpr std::uint64_t kChannel = 8;
inline constexpr std::uint64_t kSplit = 9;
}  // namespace streams

}  // namespace rrm
