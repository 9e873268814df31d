// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_RNG_HPP_
#define POSTLAB_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace postlab {

// SplitMix64. Tiny, fast, and the whole state is one u64, which keeps
// checkpointed reproducibility trivial. Not for cryptography.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) {
    // rejection sampling to avoid modulo bias
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // standard normal via Box-Muller; second value of each pair is cached
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// 64-bit FNV-1a, used to fold strings (query ids etc.) into seed material.
inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic seed derivation. Streams drawn from (seed, key) pairs are
// decorrelated by scrambling the combination through a SplitMix64 step.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

}  // namespace postlab

#endif  // POSTLAB_RNG_HPP_
