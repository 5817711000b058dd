// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "scatsim/geometry.hpp"
#include "scatsim/idf.hpp"
#include "scatsim/rng.hpp"

namespace scatsim {

// On a miss the eviction way is drawn uniformly over all ways; PreferInvalid
// picks uniformly among empty candidate slots first (kept as an experiment
// knob, not the default).
enum class Replacement : uint8_t { RandomAny, PreferInvalid };

// Literal flushes perform every flusher access one by one. The fast engine
// exploits that flusher lines are fresh and never re-read: a flush of F
// accesses is exactly F i.i.d. uniform slot overwrites, so each slot
// independently keeps its content with probability (1-1/N)^F, resolved
// lazily the next time the slot is touched.
enum class FlushEngine : uint8_t { Fast, Literal };

struct CacheOptions {
  FlushEngine flush_engine = FlushEngine::Fast;
  Replacement replacement = Replacement::RandomAny;
  uint32_t memo_bits = 15;  // 0 disables the index memo
};

struct AccessOutcome {
  bool hit = false;
  uint32_t filled_way = 0;     // valid when !hit
  uint32_t filled_index = 0;   // valid when !hit
  bool evicted_valid = false;  // a line was displaced by the fill
  SecurityDomainId evicted_sdid{};
  LineAddress evicted_addr{};
};

struct AccessCounters {
  uint64_t hits = 0;
  uint64_t misses = 0;
  uint64_t total() const { return hits + misses; }
};

// ScatterCache hashing-variant model: per-way keyed indices, random
// replacement, hit/miss as the only observable. Single-threaded.
class Cache {
 public:
  Cache(CacheGeometry geom, IdfKey key, uint64_t rng_seed,
        CacheOptions opts = {})
      : geom_(geom),
        opts_(opts),
        idf_(geom, key),
        rng_(rng_seed),
        slot_count_(geom.total_slots()),
        way_stride_(geom.indices_per_way()) {
    geom_.validate();
    slots_.resize(slot_count_);
    slot_epoch_.assign(slot_count_, 0);
    flush_balls_.push_back(0);
    survival_pow_.push_back(1.0);
    log_keep_ = std::log1p(-1.0 / static_cast<double>(slot_count_));
    if (opts_.memo_bits > 0) {
      memo_mask_ = (1u << opts_.memo_bits) - 1;
      memo_keys_.assign(size_t{1} << opts_.memo_bits, MemoKey{});
      memo_idx_.assign((size_t{1} << opts_.memo_bits) * geom_.n_ways, 0);
    }
    scratch_idx_.resize(geom_.n_ways);
  }

  Cache(const Cache&) = delete;
  Cache& operator=(const Cache&) = delete;
  Cache(Cache&&) = default;
  Cache& operator=(Cache&&) = default;

  const CacheGeometry& geometry() const { return geom_; }
  const CacheOptions& options() const { return opts_; }
  const Idf& idf() const { return idf_; }

  // Spec default: 72000 accesses at (8,11), proportional otherwise
  // (1125/256 = 4.3945 accesses per slot, residual survival ~1.23%).
  uint64_t default_flush_accesses() const {
    return (slot_count_ * 1125 + 255) / 256;
  }

  // Never-before-used address in the given role's namespace.
  LineAddress fresh_address(Role role) {
    uint64_t& ctr = role_counters_[static_cast<size_t>(role)];
    return LineAddress{role_tag(role) | ctr++};
  }

  AccessOutcome access(SecurityDomainId sdid, LineAddress addr) {
    const uint16_t* idx = lookup_indices(sdid, addr);
    AccessOutcome out;
    for (uint32_t w = 0; w < geom_.n_ways; w++) {
      Slot& s = slot_at(w, idx[w]);
      if (s.state == SlotState::Line && s.sdid == sdid.value &&
          s.addr == addr.value) {
        out.hit = true;
        bump(sdid, true);
        return out;
      }
    }
    uint32_t way = pick_way(idx);
    Slot& s = slot_at(way, idx[way]);
    out.filled_way = way;
    out.filled_index = idx[way];
    if (s.state != SlotState::Empty) {
      out.evicted_valid = true;
      out.evicted_sdid = SecurityDomainId{s.sdid};
      out.evicted_addr = LineAddress{s.addr};
    }
    s.state = SlotState::Line;
    s.sdid = sdid.value;
    s.addr = addr.value;
    bump(sdid, false);
    return out;
  }

  // flush_accesses fresh-address accesses under the dedicated flusher
  // domain. Fresh addresses are distinct from every other role's, so
  // attack/victim lines are never accessed, only randomly displaced.
  void flush(uint64_t flush_accesses) {
    if (flush_accesses == 0) return;
    flushes_++;
    if (opts_.flush_engine == FlushEngine::Literal) {
      for (uint64_t i = 0; i < flush_accesses; i++)
        access(flusher_sdid(), fresh_address(Role::Flusher));
      return;
    }
    if (flush_balls_.size() > 1 &&
        flush_balls_.back() - flush_balls_[flush_balls_.size() - 2] !=
            flush_accesses)
      uniform_flushes_ = false;
    flush_balls_.push_back(flush_balls_.back() + flush_accesses);
    counters(flusher_sdid()).misses += flush_accesses;
  }

  void flush() { flush(default_flush_accesses()); }

  // All slots empty, counters zeroed; rng and idf key untouched.
  void reset() {
    std::fill(slots_.begin(), slots_.end(), Slot{});
    std::fill(slot_epoch_.begin(), slot_epoch_.end(), 0);
    flush_balls_.assign(1, 0);
    survival_pow_.assign(1, 1.0);
    uniform_flushes_ = true;
    flushes_ = 0;
    for (auto& c : counters_) c.second = AccessCounters{};
    counters_hint_ = nullptr;
    if (!memo_keys_.empty())
      std::fill(memo_keys_.begin(), memo_keys_.end(), MemoKey{});
  }

  // Occupied slots (flusher fills included). Forces lazy flush resolution,
  // so it consumes rng state.
  uint64_t occupancy() {
    uint64_t n = 0;
    for (uint64_t s = 0; s < slot_count_; s++) {
      materialize(s);
      if (slots_[s].state != SlotState::Empty) n++;
    }
    return n;
  }

  // Ground truth for tests: whether (sdid, addr) is currently resident and
  // at which (way, index).
  std::optional<std::pair<uint32_t, uint32_t>> find_line(SecurityDomainId sdid,
                                                         LineAddress addr) {
    const uint16_t* idx = lookup_indices(sdid, addr);
    for (uint32_t w = 0; w < geom_.n_ways; w++) {
      Slot& s = slot_at(w, idx[w]);
      if (s.state == SlotState::Line && s.sdid == sdid.value &&
          s.addr == addr.value)
        return std::make_pair(w, static_cast<uint32_t>(idx[w]));
    }
    return std::nullopt;
  }

  // Memoized indices; agrees with idf().indices() exactly.
  const uint16_t* lookup_indices(SecurityDomainId sdid, LineAddress addr) {
    if (memo_mask_ == 0 || sdid == flusher_sdid()) {
      idf_.indices(sdid, addr, scratch_idx_.data());
      return scratch_idx_.data();
    }
    uint64_t h = sdid.value * 0x9E3779B97F4A7C15ull ^ addr.value;
    h = (h ^ (h >> 29)) * 0xBF58476D1CE4E5B9ull;
    size_t e = static_cast<size_t>(h >> 33) & memo_mask_;
    MemoKey& mk = memo_keys_[e];
    uint16_t* out = memo_idx_.data() + e * geom_.n_ways;
    if (!mk.valid || mk.sdid != sdid.value || mk.addr != addr.value) {
      idf_.indices(sdid, addr, out);
      mk = MemoKey{sdid.value, addr.value, true};
    }
    return out;
  }

  AccessCounters& counters(SecurityDomainId sdid) {
    if (counters_hint_ && counters_hint_->first == sdid)
      return counters_hint_->second;
    for (auto& c : counters_)
      if (c.first == sdid) {
        counters_hint_ = &c;
        return c.second;
      }
    counters_.emplace_back(sdid, AccessCounters{});
    counters_hint_ = &counters_.back();
    return counters_.back().second;
  }

  void reset_counters() {
    for (auto& c : counters_) c.second = AccessCounters{};
  }

  uint64_t flushes() const { return flushes_; }
  Rng& rng() { return rng_; }

  static SecurityDomainId flusher_sdid() { return default_sdid(Role::Flusher); }

  // Test hook: scan the grid for duplicate (sdid, addr) residents.
  bool has_duplicate_lines() {
    std::vector<std::pair<uint64_t, uint64_t>> seen;
    for (uint64_t s = 0; s < slot_count_; s++) {
      if (slots_[s].state != SlotState::Line) continue;
      for (auto& p : seen)
        if (p.first == slots_[s].sdid && p.second == slots_[s].addr)
          return true;
      seen.emplace_back(slots_[s].sdid, slots_[s].addr);
    }
    return false;
  }

 private:
  enum class SlotState : uint8_t { Empty = 0, Line = 1, FlusherFill = 2 };

  struct Slot {
    uint64_t sdid = 0;
    uint64_t addr = 0;
    SlotState state = SlotState::Empty;
  };

  struct MemoKey {
    uint64_t sdid = 0;
    uint64_t addr = 0;
    bool valid = false;
  };

  Slot& slot_at(uint32_t way, uint32_t index) {
    uint64_t s = static_cast<uint64_t>(way) * way_stride_ + index;
    if (slot_epoch_[s] != flush_balls_.size() - 1) materialize(s);
    return slots_[s];
  }

  // Resolve pending fast-flush overwrites for one slot.
  void materialize(uint64_t s) {
    uint32_t cur = static_cast<uint32_t>(flush_balls_.size() - 1);
    uint32_t at = slot_epoch_[s];
    if (at == cur) return;
    slot_epoch_[s] = cur;
    double keep;
    if (uniform_flushes_) {
      uint32_t d = cur - at;
      while (survival_pow_.size() <= d) {
        double per = std::exp(log_keep_ *
                              static_cast<double>(flush_balls_[1]));
        survival_pow_.push_back(survival_pow_.back() * per);
      }
      keep = survival_pow_[d];
    } else {
      uint64_t balls = flush_balls_[cur] - flush_balls_[at];
      keep = std::exp(log_keep_ * static_cast<double>(balls));
    }
    if (!rng_.bernoulli(keep)) {
      slots_[s].state = SlotState::FlusherFill;
      slots_[s].sdid = flusher_sdid().value;
      slots_[s].addr = role_tag(Role::Flusher) | (1ull << 55) | flusher_fill_++;
    }
  }

  uint32_t pick_way(const uint16_t* idx) {
    if (opts_.replacement == Replacement::PreferInvalid) {
      uint32_t empties[64];
      uint32_t n = 0;
      for (uint32_t w = 0; w < geom_.n_ways; w++)
        if (slot_at(w, idx[w]).state == SlotState::Empty) empties[n++] = w;
      if (n > 0) return empties[rng_.below(n)];
    }
    return rng_.below(geom_.n_ways);
  }

  void bump(SecurityDomainId sdid, bool hit) {
    AccessCounters& c = counters(sdid);
    if (hit)
      c.hits++;
    else
      c.misses++;
  }

  CacheGeometry geom_;
  CacheOptions opts_;
  Idf idf_;
  Rng rng_;
  uint64_t slot_count_;
  uint32_t way_stride_;

  std::vector<Slot> slots_;
  std::vector<uint32_t> slot_epoch_;  // flush epoch at last materialization
  std::vector<uint64_t> flush_balls_;  // cumulative flush accesses per epoch
  std::vector<double> survival_pow_;   // (1-1/N)^(F*d), uniform-F fast path
  bool uniform_flushes_ = true;
  double log_keep_ = 0.0;
  uint64_t flushes_ = 0;
  uint64_t flusher_fill_ = 0;
  uint64_t role_counters_[8] = {};

  uint32_t memo_mask_ = 0;
  std::vector<MemoKey> memo_keys_;
  std::vector<uint16_t> memo_idx_;
  std::vector<uint16_t> scratch_idx_;

  std::vector<std::pair<SecurityDomainId, AccessCounters>> counters_;
  std::pair<SecurityDomainId, AccessCounters>* counters_hint_ = nullptr;
};

// Hit/miss-only view of a cache bound to one security domain. Attack
// strategies observe the cache exclusively through this port; eviction
// identities in AccessOutcome stay on the simulator side.
class DomainPort {
 public:
  DomainPort(Cache& cache, SecurityDomainId sdid) : cache_(&cache), sdid_(sdid) {}

  // true = hit (fast), false = miss (slow).
  bool access(LineAddress addr) { return cache_->access(sdid_, addr).hit; }

  SecurityDomainId sdid() const { return sdid_; }

 private:
  Cache* cache_;
  SecurityDomainId sdid_;
};

}  // namespace scatsim
