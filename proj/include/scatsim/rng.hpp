// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace scatsim {

// SplitMix64 step; used for seed derivation and hashing small keys.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t x) { return splitmix64(x); }

// Splittable counter construction: a trial's stream depends only on
// (master_seed, cell, trial), never on scheduling or worker count.
inline uint64_t derive_seed(uint64_t master, uint64_t cell, uint64_t trial,
                            uint64_t lane = 0) {
  uint64_t s = master;
  uint64_t h = splitmix64(s);
  s = h ^ (cell * 0xD1342543DE82EF95ull);
  h = splitmix64(s);
  s = h ^ (trial * 0xAF251AF3B0F025B5ull);
  h = splitmix64(s);
  s = h ^ (lane * 0x9E6C63D0876A9A47ull);
  return splitmix64(s);
}

// Deterministic random source. Bounded draws are implemented by hand so
// results do not depend on the standard library's distribution internals.
class Rng {
 public:
  using result_type = uint64_t;

  explicit Rng(uint64_t seed) : eng_(seed) {}

  static constexpr uint64_t min() { return std::mt19937_64::min(); }
  static constexpr uint64_t max() { return std::mt19937_64::max(); }
  uint64_t operator()() { return eng_(); }

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, n) via 128-bit multiply (Lemire); n >= 1.
  uint32_t below(uint32_t n) {
    uint64_t x = eng_();
    return static_cast<uint32_t>((static_cast<unsigned __int128>(x) * n) >> 64);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return (eng_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace scatsim
