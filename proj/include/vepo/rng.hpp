#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "vepo/errors.hpp"

namespace vepo {

/// splitmix64 round; used both as a seed mixer and as the core generator.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Mixes a base seed with stream indices to derive independent substreams.
/// Replications, folds and chains each get their own derived seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
  splitmix64_next(s);
  return splitmix64_next(s);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t s1, std::uint64_t s2) {
  return derive_seed(derive_seed(base, s1), s2);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t s1, std::uint64_t s2,
                                 std::uint64_t s3) {
  return derive_seed(derive_seed(base, s1, s2), s3);
}

/// xoshiro256++ generator with portable floating-point samplers.
/// All draws are reproducible bit-for-bit given the same 64-bit seed,
/// independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (pair cached).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(6.283185307179586476925286766559 * u2);
    have_spare_ = true;
    return mag * std::cos(6.283185307179586476925286766559 * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// Exponential with unit rate.
  double exponential() {
    double u = uniform01();
    while (u <= 0.0) u = uniform01();
    return -std::log(u);
  }

  /// Samples an index from a probability vector by inverse CDF.
  /// The vector is expected to sum to 1; trailing mass absorbs roundoff.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw ConfigError("categorical: empty probability vector");
    const double u = uniform01();
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace vepo
