#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace ltqr {

//! SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Folds a seed and a path of stream indices into a single stream key.
///
/// Streams with different paths are statistically independent, and the key
/// depends only on (seed, path), never on the order in which streams are
/// created or on the thread that creates them.
constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed ^ 0x6a09e667f3bcc909ull);
  for (std::uint64_t index : path) {
    key = mix64(key + 0x9e3779b97f4a7c15ull * (index + 1));
  }
  return key;
}

/// Counter-based generator: the n-th output is a pure function of (key, n).
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ull);
  }

  /// Child stream keyed off this stream's key; does not advance the counter.
  [[nodiscard]] CounterRng split(std::uint64_t index) const noexcept {
    return CounterRng(derive_key(key_, {index}));
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Samplers are written out by hand rather than using <random> distributions,
// whose output sequences differ between standard library implementations.

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(CounterRng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(CounterRng& rng, double lo, double hi) noexcept {
  return lo + (hi - lo) * uniform01(rng);
}

/// Exponential with the given rate (mean 1/rate).
inline double exponential(CounterRng& rng, double rate) noexcept {
  return -std::log1p(-uniform01(rng)) / rate;
}

/// Standard normal via Box-Muller; consumes two uniforms per draw.
inline double standard_normal(CounterRng& rng) noexcept {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double normal(CounterRng& rng, double mean, double variance) noexcept {
  return mean + std::sqrt(variance) * standard_normal(rng);
}

/// Classical Laplace L(mean, variance): density exp(-sqrt(2)|x-mean|/s)/(sqrt(2)s)
/// with s^2 = variance, drawn as a scaled difference of two unit exponentials.
inline double laplace(CounterRng& rng, double mean, double variance) noexcept {
  const double scale = std::sqrt(variance / 2.0);
  const double e1 = exponential(rng, 1.0);
  const double e2 = exponential(rng, 1.0);
  return mean + scale * (e1 - e2);
}

inline bool bernoulli(CounterRng& rng, double p) noexcept { return uniform01(rng) < p; }

}  // namespace ltqr
