// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace scatsim {

// Streaming mean/variance (Welford).
class Accumulator {
 public:
  void add(double x) {
    n_++;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  double sd() const { return std::sqrt(variance()); }
  double se() const {
    return n_ > 0 ? sd() / std::sqrt(static_cast<double>(n_)) : 0.0;
  }

 private:
  uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  uint64_t count = 0;

  static Summary of(const Accumulator& a) {
    return {a.mean(), a.sd(), a.se(), a.count()};
  }
};

// Pearson statistic against a uniform expectation.
inline double chi_square_statistic(std::span<const uint64_t> counts,
                                   double expected_per_bucket) {
  double stat = 0.0;
  for (uint64_t c : counts) {
    double d = static_cast<double>(c) - expected_per_bucket;
    stat += d * d / expected_per_bucket;
  }
  return stat;
}

}  // namespace scatsim
