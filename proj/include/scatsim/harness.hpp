// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "scatsim/analytics.hpp"
#include "scatsim/cache.hpp"
#include "scatsim/covert.hpp"
#include "scatsim/profiling.hpp"
#include "scatsim/stats.hpp"

namespace scatsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind : uint8_t { Profile, Covert, Exploit, Predict };
enum class ReportFormat : uint8_t { Csv, Json };

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Profile;
  std::vector<CacheGeometry> geometries = {{8, 11}};
  std::vector<uint64_t> ks = {1};
  std::vector<uint64_t> ts = {1};
  std::vector<double> fs = {0.05};
  std::vector<uint32_t> ss = {64};
  uint64_t batch_size = 8000;
  uint64_t bits = 10000;
  uint32_t pilot_bits = 640;
  uint64_t exploit_trials = 10000;

  uint64_t trials = 0;  // 0 = scale default per k
  bool paper_scale = false;
  uint64_t master_seed = 1;
  LatencyModel latency;
  ProfilingConfig::InterIteration mode = ProfilingConfig::InterIteration::Flush;
  uint64_t flush_accesses = 0;  // 0 = ~4.4 accesses per slot
  bool reuse_candidates = false;

  std::string out_path;
  ReportFormat format = ReportFormat::Csv;
  uint32_t threads = 0;  // 0 = hardware concurrency
  std::string dump_trials_path;

  void validate() const {
    if (geometries.empty()) throw ConfigError("spec: geometry grid is empty");
    for (const auto& g : geometries) g.validate();
    switch (kind) {
      case ExperimentKind::Profile:
      case ExperimentKind::Exploit:
      case ExperimentKind::Predict:
        if (ks.empty()) throw ConfigError("spec: k grid is empty");
        if (ts.empty()) throw ConfigError("spec: t grid is empty");
        for (uint64_t k : ks)
          if (k < 1) throw ConfigError("spec: k must be >= 1");
        for (uint64_t t : ts)
          if (t < 1) throw ConfigError("spec: t must be >= 1");
        break;
      case ExperimentKind::Covert:
        if (fs.empty()) throw ConfigError("spec: f grid is empty");
        if (ss.empty()) throw ConfigError("spec: s grid is empty");
        if (bits < 1) throw ConfigError("spec: bits must be >= 1");
        break;
    }
  }

  // Desk-scale trial counts mirror the paper's grouping (10^7/10^5/10^4)
  // at 10^4/10^3/10^3; --paper-scale restores the published counts.
  uint64_t profile_trials_for(uint64_t k) const {
    if (trials > 0) return trials;
    if (k == 1) return paper_scale ? 10'000'000 : 10'000;
    if (k < 2000) return paper_scale ? 100'000 : 1'000;
    return paper_scale ? 10'000 : 1'000;
  }
};

// ---------------------------------------------------------------------------
// Per-cell results

struct ProfileTrialRow {
  double m_pr = 0, k_prime = 0, A_v = 0, a_miss = 0;
  uint64_t iterations = 0, collision_iterations = 0;
  uint64_t accesses = 0, misses = 0;
  int64_t bound_slack = INT64_MIN;
};

struct ProfileCellStats {
  CacheGeometry geom;
  uint64_t k = 1, t = 1, trials = 0;
  Summary m_pr, k_prime, A_v, a_miss, p_trialwise;
  double p_pooled = 0;       // total collisions / total iterations
  double a_miss_pooled = 0;  // total misses / total accesses
  double aa_per_av = 0;      // total attacker accesses / total victim accesses
  double time_ms = 0;        // runtime model on cell means
  int64_t max_bound_slack = INT64_MIN;
  std::string error;
};

struct CovertCellStats {
  CacheGeometry geom;
  double f = 0;
  uint32_t s = 0;
  uint64_t batch = 0, bits = 0, trials = 0;
  Summary ber, bandwidth_bps, modeled_time_s, mean_miss0, mean_miss1;
  Summary d, t_R, t_T, rounds;
  std::string error;
};

struct ExploitCellStats {
  CacheGeometry geom;
  uint64_t k = 1, t = 1, trials = 0;
  double evict_probability = 0;
  double measured_A_v = 0;
  std::string error;
};

struct PredictRow {
  CacheGeometry geom;
  uint64_t k = 1, t = 1;
  double av_original = 0;
  double k_prime_est = 0;  // coupon-collector estimate
  double p_est = 0;
  double av_expected = 0;
  double c_bound = 0;
  std::string error;
};

struct RunResult {
  ExperimentKind kind = ExperimentKind::Profile;
  std::vector<ProfileCellStats> profile_cells;
  std::vector<CovertCellStats> covert_cells;
  std::vector<ExploitCellStats> exploit_cells;
  std::vector<PredictRow> predict_rows;

  bool ok() const {
    for (const auto& c : profile_cells)
      if (!c.error.empty()) return false;
    for (const auto& c : covert_cells)
      if (!c.error.empty()) return false;
    for (const auto& c : exploit_cells)
      if (!c.error.empty()) return false;
    for (const auto& r : predict_rows)
      if (!r.error.empty()) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Formatting helpers

// 4 significant digits everywhere a float is printed.
inline std::string fmt_g4(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

inline double round_g4(double x) {
  return std::strtod(fmt_g4(x).c_str(), nullptr);
}

namespace detail {

inline void parallel_for(uint64_t n, uint32_t threads,
                         const std::function<void(uint64_t)>& fn) {
  if (threads == 0) threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (threads > n) threads = static_cast<uint32_t>(n ? n : 1);
  if (threads <= 1) {
    for (uint64_t i = 0; i < n; i++) fn(i);
    return;
  }
  std::atomic<uint64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (uint32_t w = 0; w < threads; w++)
    pool.emplace_back([&] {
      for (;;) {
        uint64_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& th : pool) th.join();
}

inline Cache make_trial_cache(const CacheGeometry& geom, uint64_t master,
                              uint64_t cell, uint64_t trial) {
  Rng key_rng(derive_seed(master, cell, trial, 0));
  IdfKey key = IdfKey::from_rng(key_rng);
  return Cache(geom, key, derive_seed(master, cell, trial, 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runners

inline ProfileCellStats run_profile_cell(const ExperimentSpec& spec,
                                         uint64_t cell_index,
                                         const CacheGeometry& geom, uint64_t k,
                                         uint64_t t,
                                         std::vector<ProfileTrialRow>* dump =
                                             nullptr) {
  ProfileCellStats cell;
  cell.geom = geom;
  cell.k = k;
  cell.t = t;
  cell.trials = spec.profile_trials_for(k);

  std::vector<ProfileTrialRow> rows(cell.trials);
  std::vector<std::string> errors(cell.trials);
  detail::parallel_for(cell.trials, spec.threads, [&](uint64_t i) {
    try {
      Cache cache = detail::make_trial_cache(geom, spec.master_seed, cell_index, i);
      VictimModel victim{default_sdid(Role::Victim),
                         cache.fresh_address(Role::Victim)};
      ProfilingConfig pc;
      pc.k = k;
      pc.t = t;
      pc.mode = spec.mode;
      pc.flush_accesses = spec.flush_accesses;
      pc.reuse_candidates = spec.reuse_candidates;
      ProfilingReport rep =
          profile_eviction_set(cache, pc, default_sdid(Role::Attacker), victim);
      ProfileTrialRow& r = rows[i];
      r.m_pr = rep.m_pr;
      r.k_prime = rep.k_prime;
      r.A_v = rep.A_v;
      r.a_miss = rep.a_miss;
      r.iterations = rep.iterations;
      r.collision_iterations = rep.collision_iterations;
      r.accesses = rep.attacker.accesses;
      r.misses = rep.attacker.misses;
      r.bound_slack = rep.max_bound_slack;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  for (const auto& e : errors)
    if (!e.empty()) {
      cell.error = e;
      return cell;
    }

  Accumulator m_pr, k_prime, a_v, a_miss, p_tw;
  uint64_t iters = 0, colls = 0, accs = 0, miss = 0;
  for (const auto& r : rows) {
    m_pr.add(r.m_pr);
    k_prime.add(r.k_prime);
    a_v.add(r.A_v);
    a_miss.add(r.a_miss);
    p_tw.add(r.iterations ? static_cast<double>(r.collision_iterations) /
                                static_cast<double>(r.iterations)
                          : 0.0);
    iters += r.iterations;
    colls += r.collision_iterations;
    accs += r.accesses;
    miss += r.misses;
    if (r.bound_slack > cell.max_bound_slack)
      cell.max_bound_slack = r.bound_slack;
  }
  cell.m_pr = Summary::of(m_pr);
  cell.k_prime = Summary::of(k_prime);
  cell.A_v = Summary::of(a_v);
  cell.a_miss = Summary::of(a_miss);
  cell.p_trialwise = Summary::of(p_tw);
  cell.p_pooled = iters ? static_cast<double>(colls) / static_cast<double>(iters) : 0;
  cell.a_miss_pooled = accs ? static_cast<double>(miss) / static_cast<double>(accs) : 0;
  cell.aa_per_av = iters ? static_cast<double>(accs) / static_cast<double>(iters) : 0;
  cell.time_ms = 1000.0 * runtime_seconds(spec.latency, cell.A_v.mean,
                                          cell.A_v.mean * cell.aa_per_av,
                                          cell.a_miss_pooled);
  if (dump) *dump = std::move(rows);
  return cell;
}

inline CovertCellStats run_covert_cell(const ExperimentSpec& spec,
                                       uint64_t cell_index,
                                       const CacheGeometry& geom, double f,
                                       uint32_t s) {
  CovertCellStats cell;
  cell.geom = geom;
  cell.f = f;
  cell.s = s;
  cell.batch = spec.batch_size;
  cell.bits = spec.bits;
  cell.trials = spec.trials ? spec.trials : 1;

  struct Row {
    double ber, bw, time_s, m0, m1, d, tr, tt, rounds;
  };
  std::vector<Row> rows(cell.trials);
  std::vector<std::string> errors(cell.trials);
  detail::parallel_for(cell.trials, spec.threads, [&](uint64_t i) {
    try {
      Cache cache = detail::make_trial_cache(geom, spec.master_seed, cell_index, i);
      CovertProfileConfig pc;
      pc.batch_size = spec.batch_size;
      pc.f = f;
      ChannelEndpoints ep = covert_profile(cache, pc,
                                           default_sdid(Role::Transmitter),
                                           default_sdid(Role::Receiver));
      TransmissionConfig tc;
      tc.s = s;
      tc.flush_accesses = spec.flush_accesses;
      tc.d = calibrate_threshold(cache, ep, tc, spec.pilot_bits, spec.latency);

      Rng msg_rng(derive_seed(spec.master_seed, cell_index, i, 2));
      std::vector<uint8_t> message(spec.bits);
      for (auto& b : message) b = static_cast<uint8_t>(msg_rng.next_u64() & 1);

      TransmissionReport rep = transmit(cache, ep, tc, message, spec.latency);
      rows[i] = Row{rep.ber,
                    rep.bandwidth_bps,
                    rep.modeled_time_s,
                    rep.mean_miss(0),
                    rep.mean_miss(1),
                    static_cast<double>(tc.d),
                    static_cast<double>(ep.t_R.size()),
                    static_cast<double>(ep.t_T.size()),
                    static_cast<double>(ep.rounds)};
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) {
      cell.error = e;
      return cell;
    }

  Accumulator ber, bw, ts, m0, m1, d, tr, tt, rounds;
  for (const auto& r : rows) {
    ber.add(r.ber);
    bw.add(r.bw);
    ts.add(r.time_s);
    m0.add(r.m0);
    m1.add(r.m1);
    d.add(r.d);
    tr.add(r.tr);
    tt.add(r.tt);
    rounds.add(r.rounds);
  }
  cell.ber = Summary::of(ber);
  cell.bandwidth_bps = Summary::of(bw);
  cell.modeled_time_s = Summary::of(ts);
  cell.mean_miss0 = Summary::of(m0);
  cell.mean_miss1 = Summary::of(m1);
  cell.d = Summary::of(d);
  cell.t_R = Summary::of(tr);
  cell.t_T = Summary::of(tt);
  cell.rounds = Summary::of(rounds);
  return cell;
}

inline ExploitCellStats run_exploit_cell(const ExperimentSpec& spec,
                                         uint64_t cell_index,
                                         const CacheGeometry& geom, uint64_t k,
                                         uint64_t t) {
  ExploitCellStats cell;
  cell.geom = geom;
  cell.k = k;
  cell.t = t;
  cell.trials = spec.exploit_trials;
  try {
    Cache cache = detail::make_trial_cache(geom, spec.master_seed, cell_index, 0);
    VictimModel victim{default_sdid(Role::Victim),
                       cache.fresh_address(Role::Victim)};
    ProfilingConfig pc;
    pc.k = k;
    pc.t = t;
    pc.mode = spec.mode;
    pc.flush_accesses = spec.flush_accesses;
    ProfilingReport rep =
        profile_eviction_set(cache, pc, default_sdid(Role::Attacker), victim);
    cell.measured_A_v = rep.A_v;
    cell.evict_probability = exploit_evict_probability(
        cache, rep.collision_addresses, default_sdid(Role::Attacker), victim,
        static_cast<uint32_t>(spec.exploit_trials), spec.flush_accesses);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

inline PredictRow run_predict_row(const ExperimentSpec& spec,
                                  const CacheGeometry& geom, uint64_t k,
                                  uint64_t t) {
  PredictRow row;
  row.geom = geom;
  row.k = k;
  row.t = t;
  try {
    row.av_original = static_cast<double>(
        av_original(geom.n_ways, geom.b_indices, t));
    double n_slots = static_cast<double>(geom.total_slots());
    row.k_prime_est = std::max(1.0, coupon_coverage(geom.total_slots(), k));
    row.p_est = row.k_prime_est / n_slots;
    row.av_expected = av_expected(geom.n_ways, geom.b_indices, row.k_prime_est, t);
    row.c_bound = c_bound(geom.n_ways, row.p_est);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  (void)spec;
  return row;
}

inline RunResult run(const ExperimentSpec& spec,
                     std::vector<std::vector<ProfileTrialRow>>* dumps = nullptr) {
  spec.validate();
  RunResult res;
  res.kind = spec.kind;
  uint64_t cell_index = 0;
  switch (spec.kind) {
    case ExperimentKind::Profile:
      for (const auto& g : spec.geometries)
        for (uint64_t k : spec.ks)
          for (uint64_t t : spec.ts) {
            std::vector<ProfileTrialRow> dump;
            res.profile_cells.push_back(run_profile_cell(
                spec, cell_index++, g, k, t, dumps ? &dump : nullptr));
            if (dumps) dumps->push_back(std::move(dump));
          }
      break;
    case ExperimentKind::Covert:
      for (const auto& g : spec.geometries)
        for (double f : spec.fs)
          for (uint32_t s : spec.ss)
            res.covert_cells.push_back(
                run_covert_cell(spec, cell_index++, g, f, s));
      break;
    case ExperimentKind::Exploit:
      for (const auto& g : spec.geometries)
        for (uint64_t k : spec.ks)
          for (uint64_t t : spec.ts)
            res.exploit_cells.push_back(
                run_exploit_cell(spec, cell_index++, g, k, t));
      break;
    case ExperimentKind::Predict:
      for (const auto& g : spec.geometries)
        for (uint64_t k : spec.ks)
          for (uint64_t t : spec.ts)
            res.predict_rows.push_back(run_predict_row(spec, g, k, t));
      break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Report emission

inline std::string to_csv(const RunResult& res) {
  std::ostringstream o;
  switch (res.kind) {
    case ExperimentKind::Profile: {
      o << "n_ways,b_indices,k,m_pr,k_prime,p,A_v,Aa_per_Av,a_miss,time_ms\n";
      for (const auto& c : res.profile_cells) {
        if (!c.error.empty()) {
          o << "# cell " << c.geom.str() << " k=" << c.k << " failed: " << c.error
            << "\n";
          continue;
        }
        o << c.geom.n_ways << ',' << c.geom.b_indices << ',' << c.k << ','
          << fmt_g4(c.m_pr.mean) << ',' << fmt_g4(c.k_prime.mean) << ','
          << fmt_g4(c.p_pooled) << ',' << fmt_g4(c.A_v.mean) << ','
          << fmt_g4(c.aa_per_av) << ',' << fmt_g4(c.a_miss_pooled) << ','
          << fmt_g4(c.time_ms) << "\n";
      }
      break;
    }
    case ExperimentKind::Covert: {
      o << "n_ways,b_indices,f,s,batch,rounds,t_R,t_T,d,bits,ber,"
           "mean_miss0,mean_miss1,modeled_time_s,bandwidth_bps\n";
      for (const auto& c : res.covert_cells) {
        if (!c.error.empty()) {
          o << "# cell " << c.geom.str() << " f=" << fmt_g4(c.f)
            << " failed: " << c.error << "\n";
          continue;
        }
        o << c.geom.n_ways << ',' << c.geom.b_indices << ',' << fmt_g4(c.f)
          << ',' << c.s << ',' << c.batch << ',' << fmt_g4(c.rounds.mean) << ','
          << fmt_g4(c.t_R.mean) << ',' << fmt_g4(c.t_T.mean) << ','
          << fmt_g4(c.d.mean) << ',' << c.bits << ',' << fmt_g4(c.ber.mean)
          << ',' << fmt_g4(c.mean_miss0.mean) << ',' << fmt_g4(c.mean_miss1.mean)
          << ',' << fmt_g4(c.modeled_time_s.mean) << ','
          << fmt_g4(c.bandwidth_bps.mean) << "\n";
      }
      break;
    }
    case ExperimentKind::Exploit: {
      o << "n_ways,b_indices,k,t,trials,A_v,evict_probability\n";
      for (const auto& c : res.exploit_cells) {
        if (!c.error.empty()) {
          o << "# cell " << c.geom.str() << " t=" << c.t << " failed: " << c.error
            << "\n";
          continue;
        }
        o << c.geom.n_ways << ',' << c.geom.b_indices << ',' << c.k << ','
          << c.t << ',' << c.trials << ',' << fmt_g4(c.measured_A_v) << ','
          << fmt_g4(c.evict_probability) << "\n";
      }
      break;
    }
    case ExperimentKind::Predict: {
      o << "n_ways,b_indices,k,t,av_original,k_prime_est,p_est,av_expected,"
           "c_bound\n";
      for (const auto& r : res.predict_rows) {
        if (!r.error.empty()) {
          o << "# cell " << r.geom.str() << " k=" << r.k << " failed: " << r.error
            << "\n";
          continue;
        }
        o << r.geom.n_ways << ',' << r.geom.b_indices << ',' << r.k << ','
          << r.t << ',' << fmt_g4(r.av_original) << ',' << fmt_g4(r.k_prime_est)
          << ',' << fmt_g4(r.p_est) << ',' << fmt_g4(r.av_expected) << ','
          << fmt_g4(r.c_bound) << "\n";
      }
      break;
    }
  }
  return o.str();
}

inline nlohmann::json summary_json(const Summary& s) {
  return {{"mean", round_g4(s.mean)},
          {"sd", round_g4(s.sd)},
          {"se", round_g4(s.se)},
          {"count", s.count}};
}

inline std::string to_json(const RunResult& res) {
  nlohmann::json j;
  j["units"] = {{"time_ms", "milliseconds"},
                {"modeled_time_s", "seconds"},
                {"bandwidth_bps", "bits per second"},
                {"p", "probability (unitless)"},
                {"ber", "probability (unitless)"},
                {"a_miss", "probability (unitless)"}};
  nlohmann::json cells = nlohmann::json::array();
  switch (res.kind) {
    case ExperimentKind::Profile:
      j["kind"] = "profile";
      for (const auto& c : res.profile_cells) {
        nlohmann::json e;
        e["n_ways"] = c.geom.n_ways;
        e["b_indices"] = c.geom.b_indices;
        e["k"] = c.k;
        e["t"] = c.t;
        e["trials"] = c.trials;
        if (!c.error.empty()) {
          e["error"] = c.error;
        } else {
          e["m_pr"] = summary_json(c.m_pr);
          e["k_prime"] = summary_json(c.k_prime);
          e["A_v"] = summary_json(c.A_v);
          e["a_miss"] = summary_json(c.a_miss);
          e["p_trialwise"] = summary_json(c.p_trialwise);
          e["p"] = round_g4(c.p_pooled);
          e["a_miss_pooled"] = round_g4(c.a_miss_pooled);
          e["Aa_per_Av"] = round_g4(c.aa_per_av);
          e["time_ms"] = round_g4(c.time_ms);
        }
        cells.push_back(e);
      }
      break;
    case ExperimentKind::Covert:
      j["kind"] = "covert";
      for (const auto& c : res.covert_cells) {
        nlohmann::json e;
        e["n_ways"] = c.geom.n_ways;
        e["b_indices"] = c.geom.b_indices;
        e["f"] = round_g4(c.f);
        e["s"] = c.s;
        e["batch"] = c.batch;
        e["bits"] = c.bits;
        e["trials"] = c.trials;
        if (!c.error.empty()) {
          e["error"] = c.error;
        } else {
          e["ber"] = summary_json(c.ber);
          e["bandwidth_bps"] = summary_json(c.bandwidth_bps);
          e["modeled_time_s"] = summary_json(c.modeled_time_s);
          e["mean_miss0"] = summary_json(c.mean_miss0);
          e["mean_miss1"] = summary_json(c.mean_miss1);
          e["d"] = summary_json(c.d);
          e["t_R"] = summary_json(c.t_R);
          e["t_T"] = summary_json(c.t_T);
          e["rounds"] = summary_json(c.rounds);
        }
        cells.push_back(e);
      }
      break;
    case ExperimentKind::Exploit:
      j["kind"] = "exploit";
      for (const auto& c : res.exploit_cells) {
        nlohmann::json e;
        e["n_ways"] = c.geom.n_ways;
        e["b_indices"] = c.geom.b_indices;
        e["k"] = c.k;
        e["t"] = c.t;
        e["trials"] = c.trials;
        if (!c.error.empty()) {
          e["error"] = c.error;
        } else {
          e["A_v"] = round_g4(c.measured_A_v);
          e["evict_probability"] = round_g4(c.evict_probability);
        }
        cells.push_back(e);
      }
      break;
    case ExperimentKind::Predict:
      j["kind"] = "predict";
      for (const auto& r : res.predict_rows) {
        nlohmann::json e;
        e["n_ways"] = r.geom.n_ways;
        e["b_indices"] = r.geom.b_indices;
        e["k"] = r.k;
        e["t"] = r.t;
        if (!r.error.empty()) {
          e["error"] = r.error;
        } else {
          e["av_original"] = round_g4(r.av_original);
          e["k_prime_est"] = round_g4(r.k_prime_est);
          e["p_est"] = round_g4(r.p_est);
          e["av_expected"] = round_g4(r.av_expected);
          e["c_bound"] = round_g4(r.c_bound);
        }
        cells.push_back(e);
      }
      break;
  }
  j["cells"] = cells;
  return j.dump(2) + "\n";
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string dump_trials_csv(
    const RunResult& res, const std::vector<std::vector<ProfileTrialRow>>& dumps) {
  std::ostringstream o;
  o << "cell,n_ways,b_indices,k,trial,m_pr,k_prime,A_v,a_miss,iterations,"
       "collision_iterations,accesses,misses\n";
  char buf[64];
  for (size_t c = 0; c < dumps.size(); c++) {
    const auto& cell = res.profile_cells[c];
    for (size_t i = 0; i < dumps[c].size(); i++) {
      const auto& r = dumps[c][i];
      o << c << ',' << cell.geom.n_ways << ',' << cell.geom.b_indices << ','
        << cell.k << ',' << i;
      for (double v : {r.m_pr, r.k_prime, r.A_v, r.a_miss}) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        o << buf;
      }
      o << ',' << r.iterations << ',' << r.collision_iterations << ','
        << r.accesses << ',' << r.misses << "\n";
    }
  }
  return o.str();
}

// Runs the experiment and writes the report (and optional per-trial dump).
// Returns 0 on success, 1 if any cell failed.
inline int run_and_write(const ExperimentSpec& spec, RunResult* out = nullptr) {
  std::vector<std::vector<ProfileTrialRow>> dumps;
  bool want_dumps = !spec.dump_trials_path.empty() &&
                    spec.kind == ExperimentKind::Profile;
  RunResult res = run(spec, want_dumps ? &dumps : nullptr);
  std::string report = spec.format == ReportFormat::Csv ? to_csv(res)
                                                        : to_json(res);
  if (!spec.out_path.empty()) write_file(spec.out_path, report);
  if (want_dumps)
    write_file(spec.dump_trials_path, dump_trials_csv(res, dumps));
  int code = res.ok() ? 0 : 1;
  if (out) *out = std::move(res);
  return code;
}

// ---------------------------------------------------------------------------
// Declarative key=value config files

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_num(const std::string& v, int line, const std::string& key);

template <>
inline uint64_t parse_num<uint64_t>(const std::string& v, int line,
                                    const std::string& key) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos, 0);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("line " + std::to_string(line) + ": field '" + key +
                      "': expected unsigned integer, got '" + v + "'");
  }
}

template <>
inline double parse_num<double>(const std::string& v, int line,
                                const std::string& key) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("line " + std::to_string(line) + ": field '" + key +
                      "': expected number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("line " + std::to_string(line) + ": field '" + key +
                    "': expected true/false, got '" + v + "'");
}

inline CacheGeometry parse_geometry(const std::string& v, int line) {
  size_t x = v.find('x');
  if (x == std::string::npos)
    throw ConfigError("line " + std::to_string(line) +
                      ": field 'geometry': expected WAYSxBITS, got '" + v + "'");
  CacheGeometry g;
  g.n_ways = static_cast<uint32_t>(
      parse_num<uint64_t>(v.substr(0, x), line, "geometry"));
  g.b_indices = static_cast<uint32_t>(
      parse_num<uint64_t>(v.substr(x + 1), line, "geometry"));
  return g;
}

}  // namespace detail

// Parses "key = value" lines; '#' starts a comment. Lists are
// comma-separated; geometries look like 8x11.
inline ExperimentSpec parse_spec_text(const std::string& text) {
  using namespace detail;
  ExperimentSpec spec;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    line++;
    std::string s = raw;
    size_t hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line) +
                        ": expected 'key = value', got '" + trim(raw) + "'");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(line) +
                        ": empty key or value");

    if (key == "kind") {
      if (val == "profile") spec.kind = ExperimentKind::Profile;
      else if (val == "covert") spec.kind = ExperimentKind::Covert;
      else if (val == "exploit") spec.kind = ExperimentKind::Exploit;
      else if (val == "predict") spec.kind = ExperimentKind::Predict;
      else
        throw ConfigError("line " + std::to_string(line) +
                          ": field 'kind': expected "
                          "profile|covert|exploit|predict, got '" + val + "'");
    } else if (key == "geometry") {
      spec.geometries.clear();
      for (const auto& g : split_list(val))
        spec.geometries.push_back(parse_geometry(g, line));
    } else if (key == "k") {
      spec.ks.clear();
      for (const auto& x : split_list(val))
        spec.ks.push_back(parse_num<uint64_t>(x, line, key));
    } else if (key == "t") {
      spec.ts.clear();
      for (const auto& x : split_list(val))
        spec.ts.push_back(parse_num<uint64_t>(x, line, key));
    } else if (key == "f") {
      spec.fs.clear();
      for (const auto& x : split_list(val))
        spec.fs.push_back(parse_num<double>(x, line, key));
    } else if (key == "s") {
      spec.ss.clear();
      for (const auto& x : split_list(val))
        spec.ss.push_back(
            static_cast<uint32_t>(parse_num<uint64_t>(x, line, key)));
    } else if (key == "batch") {
      spec.batch_size = parse_num<uint64_t>(val, line, key);
    } else if (key == "bits") {
      spec.bits = parse_num<uint64_t>(val, line, key);
    } else if (key == "pilot") {
      spec.pilot_bits = static_cast<uint32_t>(parse_num<uint64_t>(val, line, key));
    } else if (key == "exploit_trials") {
      spec.exploit_trials = parse_num<uint64_t>(val, line, key);
    } else if (key == "trials") {
      spec.trials = parse_num<uint64_t>(val, line, key);
    } else if (key == "paper_scale") {
      spec.paper_scale = parse_bool(val, line, key);
    } else if (key == "seed") {
      spec.master_seed = parse_num<uint64_t>(val, line, key);
    } else if (key == "mode") {
      if (val == "flush") spec.mode = ProfilingConfig::InterIteration::Flush;
      else if (val == "proceed")
        spec.mode = ProfilingConfig::InterIteration::ProceedNormally;
      else
        throw ConfigError("line " + std::to_string(line) +
                          ": field 'mode': expected flush|proceed, got '" +
                          val + "'");
    } else if (key == "flush_accesses") {
      spec.flush_accesses = parse_num<uint64_t>(val, line, key);
    } else if (key == "reuse_candidates") {
      spec.reuse_candidates = parse_bool(val, line, key);
    } else if (key == "out") {
      spec.out_path = val;
    } else if (key == "format") {
      if (val == "csv") spec.format = ReportFormat::Csv;
      else if (val == "json") spec.format = ReportFormat::Json;
      else
        throw ConfigError("line " + std::to_string(line) +
                          ": field 'format': expected csv|json, got '" + val +
                          "'");
    } else if (key == "threads") {
      spec.threads = static_cast<uint32_t>(parse_num<uint64_t>(val, line, key));
    } else if (key == "dump_trials") {
      spec.dump_trials_path = val;
    } else if (key == "t_hit") {
      spec.latency.t_hit = parse_num<double>(val, line, key);
    } else if (key == "t_miss") {
      spec.latency.t_miss = parse_num<double>(val, line, key);
    } else if (key == "t_flush") {
      spec.latency.t_flush = parse_num<double>(val, line, key);
    } else if (key == "t_victim") {
      spec.latency.t_victim = parse_num<double>(val, line, key);
    } else {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" +
                        key + "'");
    }
  }
  return spec;
}

inline ExperimentSpec parse_spec_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_spec_text(ss.str());
}

}  // namespace scatsim
