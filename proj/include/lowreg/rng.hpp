#pragma once

#include <cmath>
#include <cstdint>

namespace lowreg {

// All stochastic pieces of the toolkit (noise injection, phantom geometry,
// test data) draw from this generator: xoshiro256++ seeded through
// splitmix64, gaussians via Box-Muller. Both algorithms are fixed here so a
// given seed reproduces the same stream on every run of this implementation.

inline uint64_t splitmix64_next(uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a fresh seed from a base seed and a stream tag. Used to give each
/// image, grid cell, or pair of an experiment its own independent stream.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) noexcept {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
  return splitmix64_next(s);
}

class Rng {
public:
  explicit Rng(uint64_t seed) noexcept {
    uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  uint64_t next_u64() noexcept {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1), 53 random bits.
  double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * next_unit();
  }

  /// Standard normal via Box-Muller; the sine mate of each pair is cached.
  double next_gaussian() noexcept {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) noexcept {
    return static_cast<uint64_t>(next_unit() * static_cast<double>(n)) % n;
  }

private:
  static uint64_t rotl(uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  uint64_t state_[4] = {};
  double cached_ = 0.0;
  bool has_cached_ = false;
};

} // namespace lowreg
