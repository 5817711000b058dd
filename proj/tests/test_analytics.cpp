// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "scatsim/analytics.hpp"
#include "scatsim/rng.hpp"

using namespace scatsim;

TEST_CASE("av_original evaluates the original-analysis count") {
  REQUIRE(av_original(8, 11, 275) == 36044800ull);  // ~2^25
  REQUIRE(av_original(1, 0, 1) == 1ull);
  REQUIRE(av_original(4, 10, 1) == 16384ull);
}

TEST_CASE("av_original reports overflow") {
  REQUIRE_THROWS_AS(av_original(1u << 20, 40, 1ull << 40), std::overflow_error);
  REQUIRE_THROWS_AS(av_original(2, 64, 1), std::overflow_error);
  REQUIRE_THROWS_AS(av_original(0, 10, 1), std::invalid_argument);
}

TEST_CASE("av_expected = n_ways * 2^b * t / k'") {
  REQUIRE(av_expected(4, 10, 1, 1) == Catch::Approx(4096.0));
  REQUIRE(av_expected(8, 11, 5305, 1) == Catch::Approx(3.088).margin(0.001));
  REQUIRE(av_expected(8, 11, 5305, 275) == Catch::Approx(849.31).margin(0.01));
  REQUIRE_THROWS_AS(av_expected(8, 11, 0, 1), std::invalid_argument);
}

TEST_CASE("k=1 footnote: av_expected times n_ways equals av_original") {
  for (uint32_t n : {1u, 2u, 4u, 8u, 16u})
    for (uint32_t b : {4u, 8u, 10u, 11u})
      for (uint64_t t : {1ull, 7ull, 275ull})
        REQUIRE(av_expected(n, b, 1, t) * n ==
                Catch::Approx(static_cast<double>(av_original(n, b, t))));
}

TEST_CASE("aa_upper bound") {
  REQUIRE(aa_upper(0, 1, 1, 2.44e-4) == Catch::Approx(8196.7).margin(0.1));
  REQUIRE(aa_upper(5.52, 8000, 1, 0.33) == Catch::Approx(182303.0).margin(1.0));
  REQUIRE(aa_upper(0, 1, 0, 0.5) == 0.0);
  REQUIRE_THROWS_AS(aa_upper(1, 1, 1, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(aa_upper(1, 1, 1, 1.5), std::invalid_argument);
}

TEST_CASE("coupon coverage closed form") {
  REQUIRE(coupon_coverage(16384, 8000) == Catch::Approx(6329.6).margin(0.1));
  REQUIRE(coupon_coverage(16384, 0) == 0.0);
  // Table 1 prints k' = 1306 for (4,10,2000); the coupon estimate exceeds
  // it because pruning only removes lines.
  double est = coupon_coverage(4096, 2000);
  REQUIRE(est == Catch::Approx(1582.5).margin(0.1));
  REQUIRE(est > 1306.0);
}

TEST_CASE("c_bound") {
  REQUIRE(c_bound(8, 0.33) == Catch::Approx(3.0303).margin(0.001));
  REQUIRE(c_bound(8, 1.20e-4) == 8.0);
  REQUIRE(c_bound(1, 1.0) == 1.0);
  REQUIRE_THROWS_AS(c_bound(8, 0.0), std::invalid_argument);
}

TEST_CASE("runtime model formula") {
  LatencyModel m;
  double expect = 4098 * (0.5e-3 + 3.6e-3) + 8196 * 9.5e-9;
  REQUIRE(runtime_seconds(m, 4098, 8196, 0.0) == Catch::Approx(expect));
  REQUIRE_THROWS_AS(runtime_seconds(m, -1, 0, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(runtime_seconds(m, 1, 1, 1.5), std::invalid_argument);
}

TEST_CASE("runtime model reproduces every Table 1 time within 10%") {
  struct Row {
    double a_v, aa_per_av, a_miss, time_s;
  };
  const Row rows[] = {
      {4098, 2, 0.0, 17.0},     {21, 800, 0.25, 0.086},
      {3, 10e3, 0.27, 0.013},   {8354, 2, 0.0, 34.0},
      {42, 780, 0.26, 0.173},   {3, 21e3, 0.26, 0.014},
      {8130, 2, 0.0, 33.0},     {42, 780, 0.26, 0.172},
      {3, 22e3, 0.25, 0.014},   {16584, 2, 0.0, 68.0},
      {83, 740, 0.27, 0.341},   {3, 46e3, 0.23, 0.015},
  };
  LatencyModel m;
  for (const Row& r : rows) {
    double model = runtime_seconds(m, r.a_v, r.a_v * r.aa_per_av, r.a_miss);
    INFO("A_v=" << r.a_v << " printed=" << r.time_s << " model=" << model);
    REQUIRE(std::abs(model - r.time_s) / r.time_s < 0.10);
  }
}

TEST_CASE("runtime is monotone non-decreasing in every argument") {
  Rng rng(99);
  LatencyModel m;
  for (int i = 0; i < 200; i++) {
    double a_v = rng.next_double() * 1e5;
    double a_a = rng.next_double() * 1e7;
    double miss = rng.next_double();
    double base = runtime_seconds(m, a_v, a_a, miss);
    REQUIRE(runtime_seconds(m, a_v * 1.5 + 1, a_a, miss) >= base);
    REQUIRE(runtime_seconds(m, a_v, a_a * 1.5 + 1, miss) >= base);
    double miss2 = miss + (1.0 - miss) * 0.5;
    REQUIRE(runtime_seconds(m, a_v, a_a, miss2) >= base);  // t_miss >= t_hit
  }
}
