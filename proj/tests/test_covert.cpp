// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "scatsim/covert.hpp"

using namespace scatsim;

namespace {

constexpr SecurityDomainId kTx = SecurityDomainId{4};
constexpr SecurityDomainId kRx = SecurityDomainId{5};

Cache make_cache(CacheGeometry g, uint64_t seed) {
  Rng krng(seed * 0xD1342543DE82EF95ull + 3);
  return Cache(g, IdfKey::from_rng(krng), seed);
}

bool share_slot_coordinate(const Cache& c, SecurityDomainId s1, LineAddress a1,
                           SecurityDomainId s2, LineAddress a2) {
  auto i1 = c.idf().indices(s1, a1);
  auto i2 = c.idf().indices(s2, a2);
  for (size_t w = 0; w < i1.size(); w++)
    if (i1[w] == i2[w]) return true;
  return false;
}

// Receiver addresses filtered so no two share any way-index: the set can
// never self-evict, which makes cross-party attribution exact in tests.
std::vector<LineAddress> conflict_free_receiver_set(Cache& c, size_t count) {
  std::vector<LineAddress> out;
  while (out.size() < count) {
    LineAddress a = c.fresh_address(Role::Receiver);
    bool clean = true;
    for (LineAddress b : out)
      if (share_slot_coordinate(c, kRx, a, kRx, b)) {
        clean = false;
        break;
      }
    if (clean) out.push_back(a);
  }
  return out;
}

// Transmitter addresses sharing at least one way-index with some receiver
// address (single-way collision fixtures).
std::vector<LineAddress> colliding_transmitter_set(
    Cache& c, const std::vector<LineAddress>& t_r, size_t count) {
  std::vector<LineAddress> out;
  while (out.size() < count) {
    LineAddress a = c.fresh_address(Role::Transmitter);
    for (LineAddress r : t_r)
      if (share_slot_coordinate(c, kTx, a, kRx, r)) {
        out.push_back(a);
        break;
      }
  }
  return out;
}

ChannelEndpoints make_endpoints(std::vector<LineAddress> t_r,
                                std::vector<LineAddress> t_t) {
  ChannelEndpoints ep;
  ep.t_R = std::move(t_r);
  ep.t_T = std::move(t_t);
  ep.sdid_T = kTx;
  ep.sdid_R = kRx;
  return ep;
}

}  // namespace

TEST_CASE("bins partition t_T into s disjoint equal spans") {
  std::vector<LineAddress> t_t;
  for (uint64_t i = 0; i < 100; i++) t_t.push_back(LineAddress{i});
  ChannelEndpoints ep = make_endpoints({}, t_t);

  for (uint32_t s : {1u, 4u, 5u, 16u, 64u}) {
    auto bins = ep.bins(s);
    REQUIRE(bins.size() == s);
    size_t expect = 100 / s;
    std::set<uint64_t> seen;
    for (const auto& bin : bins) {
      REQUIRE(bin.size() == expect);
      for (LineAddress a : bin) {
        REQUIRE(seen.insert(a.value).second);  // disjoint
        REQUIRE(a.value < 100);                // subset of t_T
      }
    }
    REQUIRE(seen.size() == s * expect);  // remainder dropped
  }
  REQUIRE_THROWS_AS(ep.bins(0), std::invalid_argument);
}

TEST_CASE("a round with no cross-party slot sharing yields no collisions") {
  CacheGeometry g{2, 4};
  Cache c = make_cache(g, 1);
  // receiver set without internal conflicts
  auto rx_set = conflict_free_receiver_set(c, 4);
  // transmitter batch disjoint from every receiver slot coordinate
  std::vector<LineAddress> tx_set;
  while (tx_set.size() < 4) {
    LineAddress a = c.fresh_address(Role::Transmitter);
    bool disjoint = true;
    for (LineAddress r : rx_set)
      if (share_slot_coordinate(c, kTx, a, kRx, r)) disjoint = false;
    for (LineAddress b : tx_set)
      if (share_slot_coordinate(c, kTx, a, kTx, b)) disjoint = false;
    if (disjoint) tx_set.push_back(a);
  }

  // steps of one covert-profiling round, composed manually
  prime_and_prune(c, kRx, rx_set);
  prime_and_prune(c, kTx, tx_set);
  DomainPort rx(c, kRx), tx(c, kTx);
  for (LineAddress a : rx_set) REQUIRE(rx.access(a));  // no evictions
  for (LineAddress a : tx_set) REQUIRE(tx.access(a));
}

TEST_CASE("detected receiver collisions really share a slot coordinate") {
  CacheGeometry g{4, 7};  // N = 512
  Cache c = make_cache(g, 2);
  auto rx_set = conflict_free_receiver_set(c, 48);

  std::vector<LineAddress> tx_batch;
  for (int i = 0; i < 256; i++)
    tx_batch.push_back(c.fresh_address(Role::Transmitter));

  prime_and_prune(c, kRx, rx_set);
  prime_and_prune(c, kTx, tx_batch);
  DomainPort rx(c, kRx);
  int detected = 0;
  for (LineAddress r : rx_set)
    if (!rx.access(r)) {
      detected++;
      bool collides = false;
      for (LineAddress t : tx_batch)
        if (share_slot_coordinate(c, kRx, r, kTx, t)) {
          collides = true;
          break;
        }
      REQUIRE(collides);
    }
  REQUIRE(detected > 0);
}

TEST_CASE("covert_profile accumulates both parties to the target") {
  CacheGeometry g{4, 6};  // N = 256
  Cache c = make_cache(g, 3);
  CovertProfileConfig pc;
  pc.batch_size = 128;  // N/2: first rounds typically suffice
  pc.f = 1.0 / 256.0;   // target 1 per party
  CovertProfileTrace trace;
  ChannelEndpoints ep = covert_profile(c, pc, kTx, kRx, &trace);
  REQUIRE(ep.t_R.size() >= 1);
  REQUIRE(ep.t_T.size() >= 1);
  REQUIRE(ep.rounds <= 2);
  REQUIRE(trace.receiver_batches.size() == ep.rounds * pc.batch_size);

  // every receiver collision shares a coordinate with a transmitter batch
  // address (ground truth over the trace)
  for (LineAddress r : ep.t_R) {
    bool collides = false;
    for (LineAddress t : trace.transmitter_batches)
      if (share_slot_coordinate(c, kRx, r, kTx, t)) {
        collides = true;
        break;
      }
    REQUIRE(collides);
  }
}

TEST_CASE("single-address batches need on the order of N rounds") {
  CacheGeometry g{4, 6};
  Cache c = make_cache(g, 4);
  CovertProfileConfig pc;
  pc.batch_size = 1;
  pc.f = 1.0 / 256.0;
  pc.max_rounds = 1 << 20;
  ChannelEndpoints ep = covert_profile(c, pc, kTx, kRx);
  REQUIRE(ep.rounds > 64);
}

TEST_CASE("profiling errors out when max_rounds is too small") {
  Cache c = make_cache({4, 6}, 5);
  CovertProfileConfig pc;
  pc.batch_size = 1;
  pc.max_rounds = 2;
  pc.f = 0.05;  // target 13, unreachable in 2 single-address rounds
  REQUIRE_THROWS_AS(covert_profile(c, pc, kTx, kRx), RoundBudgetExceeded);
}

TEST_CASE("silent transmitter makes calibration degenerate") {
  CacheGeometry g{4, 8};
  Cache c = make_cache(g, 6);
  auto rx_set = conflict_free_receiver_set(c, 8);
  // |t_T| < s: every bin is empty, so the transmitter never accesses
  ChannelEndpoints ep = make_endpoints(rx_set, {});
  TransmissionConfig tc;
  tc.s = 4;
  REQUIRE_THROWS_AS(calibrate_threshold(c, ep, tc, 8), DegenerateChannel);
}

TEST_CASE("all-zero message decodes error-free at d=0") {
  CacheGeometry g{4, 8};
  Cache c = make_cache(g, 7);
  auto rx_set = conflict_free_receiver_set(c, 40);
  auto tx_set = colliding_transmitter_set(c, rx_set, 32);
  ChannelEndpoints ep = make_endpoints(rx_set, tx_set);
  TransmissionConfig tc;
  tc.s = 8;
  tc.d = 0;
  std::vector<uint8_t> zeros(64, 0);
  TransmissionReport rep = transmit(c, ep, tc, zeros);
  REQUIRE(rep.bits_sent == 64);
  REQUIRE(rep.bit_errors == 0);
  REQUIRE(rep.ber == 0.0);
  REQUIRE(rep.mean_miss(0) == 0.0);
}

TEST_CASE("a set bit separates from silence and tracks the channel model") {
  CacheGeometry g{4, 8};  // n=4, N=1024
  Cache c = make_cache(g, 8);
  auto rx_set = conflict_free_receiver_set(c, 32);
  auto tx_set = colliding_transmitter_set(c, rx_set, 16);
  ChannelEndpoints ep = make_endpoints(rx_set, tx_set);
  TransmissionConfig tc;
  tc.s = 2;  // bins of 8
  tc.d = 0;

  std::vector<uint8_t> pattern(600);
  for (size_t i = 0; i < pattern.size(); i++) pattern[i] = i & 1;
  TransmissionReport rep = transmit(c, ep, tc, pattern);

  uint64_t ones = 0, ones_detected = 0, zeros = 0, zeros_quiet = 0;
  for (size_t cnt = 0; cnt < rep.miss_hist1.size(); cnt++) {
    ones += rep.miss_hist1[cnt];
    if (cnt > 0) ones_detected += rep.miss_hist1[cnt];
  }
  for (size_t cnt = 0; cnt < rep.miss_hist0.size(); cnt++) {
    zeros += rep.miss_hist0[cnt];
    if (cnt == 0) zeros_quiet += rep.miss_hist0[cnt];
  }
  double p_detect = static_cast<double>(ones_detected) / ones;
  double p_false = 1.0 - static_cast<double>(zeros_quiet) / zeros;

  // 8 accesses, certified one-way collisions: >= 1-(1-1/n^2)^8 = 0.40,
  // plus ~3% background per access; keep a loose band around it
  REQUIRE(p_detect > 0.25);
  REQUIRE(p_detect < 0.85);
  REQUIRE(p_detect > p_false + 0.2);
  REQUIRE(rep.mean_miss(1) > rep.mean_miss(0));
}

TEST_CASE("more redundancy per bin does not hurt BER") {
  CacheGeometry g{4, 8};
  Cache c = make_cache(g, 9);
  auto rx_set = conflict_free_receiver_set(c, 48);
  auto tx_full = colliding_transmitter_set(c, rx_set, 64);

  std::vector<uint8_t> msg(800);
  Rng mr(17);
  for (auto& b : msg) b = mr.next_u64() & 1;

  double ber[3];
  size_t sizes[3] = {8, 24, 64};  // bins of 4, 12, 32 at s=2
  for (int lvl = 0; lvl < 3; lvl++) {
    std::vector<LineAddress> t_t(tx_full.begin(), tx_full.begin() + sizes[lvl]);
    ChannelEndpoints ep = make_endpoints(rx_set, t_t);
    TransmissionConfig tc;
    tc.s = 2;
    tc.d = calibrate_threshold(c, ep, tc, 120);
    ber[lvl] = transmit(c, ep, tc, msg).ber;
  }
  // one-sided with statistical slack
  REQUIRE(ber[1] <= ber[0] + 0.05);
  REQUIRE(ber[2] <= ber[1] + 0.05);
  REQUIRE(ber[2] <= ber[0] + 0.05);
}

TEST_CASE("identical seed and message give identical reports") {
  std::vector<uint8_t> msg(300);
  Rng mr(23);
  for (auto& b : msg) b = mr.next_u64() & 1;

  TransmissionReport reps[2];
  for (int r = 0; r < 2; r++) {
    Cache c = make_cache({4, 7}, 11);
    CovertProfileConfig pc;
    pc.batch_size = 200;
    pc.f = 0.08;
    ChannelEndpoints ep = covert_profile(c, pc, kTx, kRx);
    TransmissionConfig tc;
    tc.s = 8;
    tc.d = calibrate_threshold(c, ep, tc, 64);
    reps[r] = transmit(c, ep, tc, msg);
  }
  REQUIRE(reps[0].bit_errors == reps[1].bit_errors);
  REQUIRE(reps[0].decoded == reps[1].decoded);
  REQUIRE(reps[0].miss_hist0 == reps[1].miss_hist0);
  REQUIRE(reps[0].miss_hist1 == reps[1].miss_hist1);
  REQUIRE(reps[0].modeled_time_s == reps[1].modeled_time_s);
}

TEST_CASE("paper-scale profiling reaches both targets within a few rounds") {
  CacheGeometry g{8, 11};
  Cache c = make_cache(g, 12);
  CovertProfileConfig pc;  // batch 8000, f = 0.05
  ChannelEndpoints ep = covert_profile(c, pc, kTx, kRx);
  const uint64_t target = 820;  // ceil(0.05 * 16384)
  REQUIRE(ep.t_R.size() >= target);
  REQUIRE(ep.t_T.size() >= target);
  REQUIRE(ep.rounds <= 4);
}
