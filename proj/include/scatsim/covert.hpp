// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "scatsim/analytics.hpp"
#include "scatsim/cache.hpp"
#include "scatsim/profiling.hpp"

namespace scatsim {

struct RoundBudgetExceeded : std::runtime_error {
  RoundBudgetExceeded()
      : std::runtime_error("covert profiling hit max_rounds before both "
                           "parties reached the collision target") {}
};

struct DegenerateChannel : std::runtime_error {
  DegenerateChannel()
      : std::runtime_error("pilot miss-count distributions for 0 and 1 bits "
                           "are identical; no threshold separates them") {}
};

struct CovertProfileConfig {
  uint64_t batch_size = 8000;  // addresses per party per round
  double f = 0.05;             // target = ceil(f * total_slots) per party
  uint32_t max_rounds = 64;
  bool transmitter_prunes = true;  // suppress self-eviction false positives
  uint32_t max_prune_passes = 64;

  void validate() const {
    if (!(f > 0.0) || !(f < 1.0))
      throw std::invalid_argument("covert config: f in (0,1)");
    if (batch_size < 1)
      throw std::invalid_argument("covert config: batch_size >= 1");
  }
};

// Collision sets discovered by the collaborating parties.
struct ChannelEndpoints {
  std::vector<LineAddress> t_R;  // receiver collision addresses
  std::vector<LineAddress> t_T;  // transmitter collision addresses
  SecurityDomainId sdid_T;
  SecurityDomainId sdid_R;
  uint32_t rounds = 0;

  // s disjoint equally sized bins over t_T; |t_T| mod s addresses at the
  // tail stay unused.
  std::vector<std::span<const LineAddress>> bins(uint32_t s) const {
    if (s < 1) throw std::invalid_argument("bins: s >= 1");
    size_t size = t_T.size() / s;
    std::vector<std::span<const LineAddress>> out;
    out.reserve(s);
    for (uint32_t i = 0; i < s; i++)
      out.push_back(std::span<const LineAddress>(t_T.data() + i * size, size));
    return out;
  }
};

// Everything both parties touched, for ground-truth checks in tests.
struct CovertProfileTrace {
  std::vector<LineAddress> receiver_batches;
  std::vector<LineAddress> transmitter_batches;
};

// Birthday-style mutual collision finding: per round the receiver primes
// and prunes a fresh batch, the transmitter loads (and by default prunes)
// its own, then each party re-walks its set and keeps the addresses the
// other party evicted. Rounds repeat until both sets reach the target.
inline ChannelEndpoints covert_profile(Cache& cache,
                                       const CovertProfileConfig& config,
                                       SecurityDomainId sdid_T,
                                       SecurityDomainId sdid_R,
                                       CovertProfileTrace* trace = nullptr) {
  config.validate();
  const uint64_t target = static_cast<uint64_t>(
      std::ceil(config.f * static_cast<double>(cache.geometry().total_slots())));

  ChannelEndpoints ep;
  ep.sdid_T = sdid_T;
  ep.sdid_R = sdid_R;
  DomainPort rx(cache, sdid_R);
  DomainPort tx(cache, sdid_T);

  std::vector<LineAddress> batch;
  for (uint32_t round = 1; round <= config.max_rounds; round++) {
    batch.clear();
    for (uint64_t i = 0; i < config.batch_size; i++)
      batch.push_back(cache.fresh_address(Role::Receiver));
    if (trace)
      trace->receiver_batches.insert(trace->receiver_batches.end(),
                                     batch.begin(), batch.end());
    PrunedSet rx_set =
        prime_and_prune(cache, sdid_R, batch, config.max_prune_passes);

    batch.clear();
    for (uint64_t i = 0; i < config.batch_size; i++)
      batch.push_back(cache.fresh_address(Role::Transmitter));
    if (trace)
      trace->transmitter_batches.insert(trace->transmitter_batches.end(),
                                        batch.begin(), batch.end());
    std::vector<LineAddress> tx_set;
    if (config.transmitter_prunes) {
      tx_set = prime_and_prune(cache, sdid_T, batch, config.max_prune_passes)
                   .addresses;
    } else {
      for (LineAddress a : batch) tx.access(a);
      tx_set = batch;
    }

    // Receiver re-walk: misses were evicted by the transmitter.
    for (LineAddress a : rx_set.addresses)
      if (!rx.access(a)) ep.t_R.push_back(a);
    // Transmitter re-walk: misses were evicted by the receiver's refills.
    for (LineAddress a : tx_set)
      if (!tx.access(a)) ep.t_T.push_back(a);

    if (ep.t_R.size() >= target && ep.t_T.size() >= target) {
      ep.rounds = round;
      return ep;
    }
  }
  throw RoundBudgetExceeded{};
}

struct TransmissionConfig {
  uint32_t s = 64;  // bits per sequence
  uint32_t d = 0;   // decode 1 iff miss count > d
  uint64_t flush_accesses = 0;  // 0 = cache default
  uint32_t max_stabilize_passes = 16;

  void validate() const {
    if (s < 1) throw std::invalid_argument("transmission config: s >= 1");
  }
};

struct TransmissionReport {
  uint64_t bits_sent = 0;
  uint64_t bit_errors = 0;
  double ber = 0.0;
  std::vector<uint64_t> miss_hist0;  // receiver miss counts when sending 0
  std::vector<uint64_t> miss_hist1;  // ... when sending 1
  std::vector<uint8_t> decoded;
  double modeled_time_s = 0.0;
  double bandwidth_bps = 0.0;
  AccessTally receiver;
  AccessTally transmitter;
  uint64_t flushes = 0;

  double mean_miss(int bit) const {
    const auto& h = bit ? miss_hist1 : miss_hist0;
    uint64_t n = 0, sum = 0;
    for (size_t c = 0; c < h.size(); c++) {
      n += h[c];
      sum += h[c] * c;
    }
    return n ? static_cast<double>(sum) / static_cast<double>(n) : 0.0;
  }
};

namespace detail {

inline void hist_record(std::vector<uint64_t>& h, uint64_t count) {
  if (h.size() <= count) h.resize(count + 1, 0);
  h[count]++;
}

// Transmitter-silent reloads of t_R so each sequence starts from a
// (near-)self-consistent receiver set: right after a flush, reload refills
// cascade-evict each other. Best effort: stops at the first zero-miss pass
// or after max_passes; at high t_R density a zero-miss pass may not exist
// and the residual shows up as 0-bit noise absorbed by the threshold.
inline void stabilize_receiver(DomainPort& rx,
                               std::span<const LineAddress> t_r,
                               uint32_t max_passes, AccessTally& tally) {
  for (uint32_t p = 0; p < max_passes; p++) {
    uint64_t misses = 0;
    for (LineAddress a : t_r) {
      bool hit = rx.access(a);
      tally.count(hit);
      if (!hit) misses++;
    }
    if (misses == 0) return;
  }
}

}  // namespace detail

// Binned probabilistic transmission: sequences of s bits separated by a
// flush; within a sequence, bit i is signalled by accessing (1) or not
// accessing (0) bin t_T,i between two receiver passes over t_R, and
// decoded from the miss count of the second pass.
inline TransmissionReport transmit(Cache& cache, const ChannelEndpoints& ep,
                                   const TransmissionConfig& config,
                                   std::span<const uint8_t> bits,
                                   const LatencyModel& lat = {}) {
  config.validate();
  auto bins = ep.bins(config.s);
  DomainPort rx(cache, ep.sdid_R);
  DomainPort tx(cache, ep.sdid_T);
  const uint64_t flush_size = config.flush_accesses
                                  ? config.flush_accesses
                                  : cache.default_flush_accesses();

  TransmissionReport rep;
  rep.decoded.reserve(bits.size());
  size_t pos = 0;
  while (pos < bits.size()) {
    size_t seq_len = std::min<size_t>(config.s, bits.size() - pos);
    cache.flush(flush_size);
    rep.flushes++;
    detail::stabilize_receiver(rx, ep.t_R, config.max_stabilize_passes,
                               rep.receiver);

    for (size_t i = 0; i < seq_len; i++) {
      bool bit = bits[pos + i] != 0;
      for (LineAddress a : ep.t_R) rep.receiver.count(rx.access(a));
      if (bit)
        for (LineAddress a : bins[i]) rep.transmitter.count(tx.access(a));
      uint64_t miss_count = 0;
      for (LineAddress a : ep.t_R) {
        bool hit = rx.access(a);
        rep.receiver.count(hit);
        if (!hit) miss_count++;
      }
      detail::hist_record(bit ? rep.miss_hist1 : rep.miss_hist0, miss_count);
      bool decoded = miss_count > config.d;
      rep.decoded.push_back(decoded ? 1 : 0);
      if (decoded != bit) rep.bit_errors++;
    }
    pos += seq_len;
  }

  rep.bits_sent = bits.size();
  rep.ber = rep.bits_sent ? static_cast<double>(rep.bit_errors) /
                                static_cast<double>(rep.bits_sent)
                          : 0.0;
  uint64_t hits = rep.receiver.accesses - rep.receiver.misses +
                  rep.transmitter.accesses - rep.transmitter.misses;
  uint64_t misses = rep.receiver.misses + rep.transmitter.misses;
  rep.modeled_time_s = static_cast<double>(rep.flushes) * lat.t_flush +
                       static_cast<double>(hits) * lat.t_hit +
                       static_cast<double>(misses) * lat.t_miss;
  rep.bandwidth_bps = rep.modeled_time_s > 0
                          ? static_cast<double>(rep.bits_sent) / rep.modeled_time_s
                          : 0.0;
  return rep;
}

// Transmits a known alternating pilot and returns the threshold d that
// minimizes pilot BER (ties broken toward smaller d).
inline uint32_t calibrate_threshold(Cache& cache, const ChannelEndpoints& ep,
                                    const TransmissionConfig& base,
                                    uint32_t pilot_bits,
                                    const LatencyModel& lat = {}) {
  if (pilot_bits < 2 * base.s)
    throw std::invalid_argument("calibrate: pilot_bits must be >= 2s");
  std::vector<uint8_t> pilot(pilot_bits);
  for (uint32_t i = 0; i < pilot_bits; i++) pilot[i] = i & 1;

  TransmissionConfig cfg = base;
  cfg.d = 0;
  TransmissionReport rep = transmit(cache, ep, cfg, pilot, lat);

  size_t n = std::max(rep.miss_hist0.size(), rep.miss_hist1.size());
  std::vector<uint64_t> h0(rep.miss_hist0), h1(rep.miss_hist1);
  h0.resize(n, 0);
  h1.resize(n, 0);
  if (h0 == h1) throw DegenerateChannel{};

  // errors(d) = #(1-bits with count <= d) + #(0-bits with count > d)
  uint64_t zeros_above = 0;
  for (uint64_t c : h0) zeros_above += c;
  uint64_t ones_below = 0;
  uint64_t best_err = UINT64_MAX;
  uint32_t best_d = 0;
  for (size_t d = 0; d < n; d++) {
    ones_below += h1[d];
    zeros_above -= h0[d];
    uint64_t err = ones_below + zeros_above;
    if (err < best_err) {
      best_err = err;
      best_d = static_cast<uint32_t>(d);
    }
  }
  return best_d;
}

}  // namespace scatsim
