// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace scatsim {

// Four-constant access-time model used to turn simulated access counts
// into wall-clock estimates.
struct LatencyModel {
  double t_hit = 9.5e-9;
  double t_miss = 50e-9;
  double t_flush = 3.6e-3;
  double t_victim = 0.5e-3;
};

// Original-analysis victim-access count: n_ways^2 * 2^b_indices * t.
inline uint64_t av_original(uint32_t n_ways, uint32_t b_indices, uint64_t t) {
  if (n_ways < 1 || t < 1) throw std::invalid_argument("av_original: args >= 1");
  uint64_t r = 0;
  uint64_t ways2 = static_cast<uint64_t>(n_ways) * n_ways;
  if (b_indices >= 64 || __builtin_mul_overflow(ways2, uint64_t{1} << b_indices, &r) ||
      __builtin_mul_overflow(r, t, &r))
    throw std::overflow_error("av_original: result overflows 64 bits");
  return r;
}

// Generalized profiling: A_v = t/p = n_ways * 2^b_indices * t / k'.
inline double av_expected(uint32_t n_ways, uint32_t b_indices, double k_prime,
                          uint64_t t) {
  if (k_prime < 1.0) throw std::invalid_argument("av_expected: k' must be >= 1");
  return static_cast<double>(n_ways) * std::ldexp(1.0, static_cast<int>(b_indices)) *
         static_cast<double>(t) / k_prime;
}

// Attacker-access upper bound: (m_pr + 2) * k * t / p, flushes excluded.
inline double aa_upper(double m_pr, uint64_t k, uint64_t t, double p) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("aa_upper: p in (0,1]");
  return (m_pr + 2.0) * static_cast<double>(k) * static_cast<double>(t) / p;
}

// Expected occupied slots after k fills: N * (1 - (1 - 1/N)^k).
inline double coupon_coverage(uint64_t n_slots, uint64_t k) {
  if (n_slots < 1) throw std::invalid_argument("coupon_coverage: N >= 1");
  double n = static_cast<double>(n_slots);
  return n * -std::expm1(static_cast<double>(k) * std::log1p(-1.0 / n));
}

// Proceed-normally iteration inflation: c <= min(n_ways, 1/p).
inline double c_bound(uint32_t n_ways, double p) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("c_bound: p in (0,1]");
  return std::min(static_cast<double>(n_ways), 1.0 / p);
}

// Profiling wall-clock: one victim computation plus one flush per
// iteration, attacker accesses split by their miss rate.
inline double runtime_seconds(const LatencyModel& m, double a_v, double a_a,
                              double a_miss) {
  if (a_v < 0 || a_a < 0 || a_miss < 0 || a_miss > 1)
    throw std::invalid_argument("runtime_seconds: bad arguments");
  return a_v * (m.t_victim + m.t_flush) +
         a_a * (a_miss * m.t_miss + (1.0 - a_miss) * m.t_hit);
}

}  // namespace scatsim
