// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "scatsim/cache.hpp"

namespace scatsim {

struct PruneDidNotConverge : std::runtime_error {
  PruneDidNotConverge()
      : std::runtime_error("prune did not converge within max_prune_passes") {}
};

struct IterationBudgetExceeded : std::runtime_error {
  IterationBudgetExceeded()
      : std::runtime_error("profiling hit max_iterations before finding t "
                           "collision addresses") {}
};

struct ProfilingConfig {
  uint64_t k = 1;  // candidate-set size
  uint64_t t = 1;  // target number of colliding addresses

  enum class InterIteration : uint8_t { Flush, ProceedNormally };
  InterIteration mode = InterIteration::Flush;
  uint64_t flush_accesses = 0;  // 0 = cache default (~4.4 per slot)

  uint32_t max_prune_passes = 64;
  uint64_t max_iterations = 100'000'000;
  bool reuse_candidates = false;  // fresh candidates per iteration by default

  void validate() const {
    if (k < 1 || t < 1)
      throw std::invalid_argument("profiling config: k and t must be >= 1");
    if (max_prune_passes < 1)
      throw std::invalid_argument("profiling config: max_prune_passes >= 1");
  }
};

struct AccessTally {
  uint64_t accesses = 0;
  uint64_t misses = 0;

  void count(bool hit) {
    accesses++;
    if (!hit) misses++;
  }
  AccessTally& operator+=(const AccessTally& o) {
    accesses += o.accesses;
    misses += o.misses;
    return *this;
  }
};

// Survivors of prime+prune: all resident, no mutual eviction.
// passes = prune passes executed, including the terminating zero-miss
// pass; a single candidate cannot self-evict, so k=1 runs no passes.
struct PrunedSet {
  std::vector<LineAddress> addresses;
  uint32_t passes = 0;
  AccessTally tally;
};

struct VictimModel {
  SecurityDomainId sdid;
  LineAddress target;
};

struct ProfilingReport {
  // Per-iteration means over the run.
  double m_pr = 0.0;
  double k_prime = 0.0;
  double p_hat = 0.0;  // fraction of iterations that yielded a collision
  double A_v = 0.0;    // total victim accesses (one per iteration)
  double A_a = 0.0;    // total attacker accesses (prime + prune + probe)
  double a_miss = 0.0;

  std::vector<LineAddress> collision_addresses;
  uint64_t iterations = 0;
  uint64_t collision_iterations = 0;
  AccessTally attacker;

  // max over iterations of (attacker accesses - (m_pr+2)k); <= 0 means the
  // per-iteration attacker-access bound held throughout.
  int64_t max_bound_slack = INT64_MIN;
};

// Loads candidates, then re-walks the surviving ordered set until a pass
// sees no miss. A miss within a pass removes the address from the set; the
// access itself still refills the cache and can evict a later survivor,
// which is why passes repeat.
inline PrunedSet prime_and_prune(Cache& cache, SecurityDomainId attacker,
                                 std::span<const LineAddress> candidates,
                                 uint32_t max_prune_passes = 64) {
  DomainPort port(cache, attacker);
  PrunedSet out;
  out.addresses.assign(candidates.begin(), candidates.end());
  for (LineAddress a : out.addresses) out.tally.count(port.access(a));
  if (out.addresses.size() <= 1) return out;

  for (;;) {
    if (out.passes == max_prune_passes) throw PruneDidNotConverge{};
    out.passes++;
    size_t kept = 0;
    bool any_evicted = false;
    for (size_t i = 0; i < out.addresses.size(); i++) {
      bool hit = port.access(out.addresses[i]);
      out.tally.count(hit);
      if (hit)
        out.addresses[kept++] = out.addresses[i];
      else
        any_evicted = true;
    }
    out.addresses.resize(kept);
    if (!any_evicted) break;
  }
  return out;
}

// Probe step: re-access the pruned set in prime order. The victim makes a
// single access per iteration and so evicts at most one line; the first
// miss in pass order is that line (nothing else ran since the clean prune
// pass), so only it is reported. The pass continues to refill.
inline std::optional<LineAddress> probe_for_collision(
    DomainPort& port, std::span<const LineAddress> pruned, AccessTally& tally) {
  std::optional<LineAddress> found;
  for (LineAddress a : pruned) {
    bool hit = port.access(a);
    tally.count(hit);
    if (!hit && !found) found = a;
  }
  return found;
}

// Generalized profiling: repeat (prime+prune, one victim access of
// interest, probe) until t distinct collision addresses are found.
inline ProfilingReport profile_eviction_set(Cache& cache,
                                            const ProfilingConfig& config,
                                            SecurityDomainId attacker,
                                            const VictimModel& victim) {
  config.validate();
  DomainPort attacker_port(cache, attacker);
  DomainPort victim_port(cache, victim.sdid);

  ProfilingReport rep;
  std::unordered_set<LineAddress> seen;
  uint64_t sum_passes = 0;
  uint64_t sum_survivors = 0;

  std::vector<LineAddress> candidates;
  candidates.reserve(config.k);

  while (rep.collision_addresses.size() < config.t) {
    if (rep.iterations >= config.max_iterations)
      throw IterationBudgetExceeded{};
    rep.iterations++;

    if (candidates.empty() || !config.reuse_candidates) {
      candidates.clear();
      for (uint64_t i = 0; i < config.k; i++)
        candidates.push_back(cache.fresh_address(Role::Attacker));
    }

    PrunedSet pruned = prime_and_prune(cache, attacker, candidates,
                                       config.max_prune_passes);
    sum_passes += pruned.passes;
    sum_survivors += pruned.addresses.size();

    victim_port.access(victim.target);

    AccessTally iter_tally = pruned.tally;
    std::optional<LineAddress> hit_addr =
        probe_for_collision(attacker_port, pruned.addresses, iter_tally);
    if (hit_addr) {
      rep.collision_iterations++;
      if (!config.reuse_candidates || seen.insert(*hit_addr).second)
        rep.collision_addresses.push_back(*hit_addr);
    }
    rep.attacker += iter_tally;

    int64_t bound = static_cast<int64_t>(pruned.passes + 2) *
                    static_cast<int64_t>(config.k);
    int64_t slack = static_cast<int64_t>(iter_tally.accesses) - bound;
    if (slack > rep.max_bound_slack) rep.max_bound_slack = slack;

    if (config.mode == ProfilingConfig::InterIteration::Flush)
      cache.flush(config.flush_accesses ? config.flush_accesses
                                        : cache.default_flush_accesses());
  }

  double iters = static_cast<double>(rep.iterations);
  rep.m_pr = static_cast<double>(sum_passes) / iters;
  rep.k_prime = static_cast<double>(sum_survivors) / iters;
  rep.p_hat = static_cast<double>(rep.collision_iterations) / iters;
  rep.A_v = iters;
  rep.A_a = static_cast<double>(rep.attacker.accesses);
  rep.a_miss = rep.attacker.accesses
                   ? static_cast<double>(rep.attacker.misses) /
                         static_cast<double>(rep.attacker.accesses)
                   : 0.0;
  return rep;
}

// Exploitation-phase check: Monte Carlo estimate of the probability that
// accessing the t profiled addresses once evicts the victim's line.
// Callers pass addresses that profiling observed to collide with the
// target.
inline double exploit_evict_probability(Cache& cache,
                                        std::span<const LineAddress> collisions,
                                        SecurityDomainId attacker,
                                        const VictimModel& victim,
                                        uint32_t trials,
                                        uint64_t flush_accesses = 0) {
  if (trials == 0) throw std::invalid_argument("exploit: trials >= 1");
  DomainPort attacker_port(cache, attacker);
  DomainPort victim_port(cache, victim.sdid);
  uint64_t fa = flush_accesses ? flush_accesses : cache.default_flush_accesses();

  uint64_t evictions = 0;
  for (uint32_t i = 0; i < trials; i++) {
    cache.flush(fa);
    victim_port.access(victim.target);
    for (LineAddress a : collisions) attacker_port.access(a);
    if (!victim_port.access(victim.target)) evictions++;
  }
  return static_cast<double>(evictions) / static_cast<double>(trials);
}

}  // namespace scatsim
