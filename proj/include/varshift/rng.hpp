#pragma once

#include <cstdint>
#include <initializer_list>

namespace varshift {

/// Identifies one reproducible stream of random draws.
///
/// Two seeds with equal (seed, stream_id) produce bit-identical draws on
/// every platform. Independent streams for a sweep are obtained with
/// derive(), which hashes extra coordinates (experiment, repetition, role)
/// into a new stream id.
struct RandomSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  [[nodiscard]] RandomSeed derive(std::initializer_list<std::uint64_t> coords) const;

  friend bool operator==(const RandomSeed&, const RandomSeed&) = default;
};

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Random-access generator: draw k is a pure function of (seed, stream_id, k).
///
/// This is the SplitMix64 sequence addressed by counter, so any slab of a
/// batch can be generated independently and in any order.
class CounterRng {
 public:
  explicit CounterRng(RandomSeed seed) noexcept;

  [[nodiscard]] std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(base_ + (counter + 1) * kGamma);
  }

  /// Uniform on [0, 1) with 53 random bits.
  [[nodiscard]] double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform on the open interval (0, 1): bin midpoints of the 53-bit grid.
  [[nodiscard]] double uniform_open(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal draw number k: the normal quantile of uniform_open(k).
  [[nodiscard]] double normal(std::uint64_t k) const noexcept;

  /// Fills out[0..count) with normal draws k0 .. k0+count-1.
  void fill_normal(std::uint64_t k0, double* out, std::uint64_t count) const noexcept;

  /// Bernoulli(p) draw number k; equivalent to uniform(k) < p.
  [[nodiscard]] bool bernoulli(std::uint64_t k, double p) const noexcept {
    return uniform(k) < p;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  std::uint64_t base_;
};

}  // namespace varshift
