#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace keymocap {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Constants:
///   gamma   = 0x9E3779B97F4A7C15
///   mix 1   = 0xBF58476D1CE4E5B9 (shift 30)
///   mix 2   = 0x94D049BB133111EB (shift 27), final shift 31
inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

/// Derives an independent stream key from a parent key and a tag.
inline constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t tag) {
  return splitmix64_mix(key ^ splitmix64_mix(tag + kSplitMixGamma));
}

/// Counter-based 64-bit generator: draw i of stream `key` is
/// splitmix64_mix(key + (i + 1) * gamma). The output for a given (key, i) is
/// fixed across platforms and compilers, unlike the std distributions, so all
/// derived reals are computed here as well.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(splitmix64_mix(key)) {}

  constexpr std::uint64_t next_u64() {
    ++counter_;
    return splitmix64_mix(key_ + counter_ * kSplitMixGamma);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace keymocap
