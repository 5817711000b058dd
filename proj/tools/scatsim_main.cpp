// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver for the randomized-cache attack simulator.
//
//   scatsim profile --geometry 8x11 --k 1,200,8000 --out table.csv
//   scatsim covert  --geometry 8x11 --f 0.05 --s 64 --bits 10000
//   scatsim exploit --geometry 8x11 --k 8000 --t 275
//   scatsim predict --geometry 8x11 --k 8000 --t 275
//
// A declarative key=value config can seed any subcommand (--spec FILE);
// command-line flags override config values.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scatsim/harness.hpp"

namespace {

using namespace scatsim;

struct CliOverrides {
  std::string spec_path;
  std::vector<std::string> geometry;
  std::vector<uint64_t> ks;
  std::vector<uint64_t> ts;
  std::vector<double> fs;
  std::vector<uint64_t> ss;
  uint64_t batch = 0;
  uint64_t bits = 0;
  uint64_t pilot = 0;
  uint64_t exploit_trials = 0;
  int64_t trials = -1;
  bool paper_scale = false;
  int64_t seed = -1;
  std::string mode;
  uint64_t flush_accesses = 0;
  bool reuse = false;
  std::string out;
  std::string format;
  int64_t threads = -1;
  std::string dump_trials;
  double t_hit = -1, t_miss = -1, t_flush = -1, t_victim = -1;
};

void add_common(CLI::App* sub, CliOverrides& o) {
  sub->add_option("--spec", o.spec_path, "config file (key = value lines)");
  sub->add_option("--geometry", o.geometry, "cache geometry, e.g. 8x11");
  sub->add_option("--trials", o.trials, "trials per cell (0 = scale default)");
  sub->add_flag("--paper-scale", o.paper_scale,
                "use the published trial counts (10^7/10^5/10^4)");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out", o.out, "report file path");
  sub->add_option("--format", o.format, "csv | json");
  sub->add_option("--threads", o.threads, "worker threads (0 = auto)");
  sub->add_option("--flush-accesses", o.flush_accesses,
                  "flush size in accesses (0 = ~4.4 per slot)");
  sub->add_option("--t-hit", o.t_hit, "latency model: hit seconds");
  sub->add_option("--t-miss", o.t_miss, "latency model: miss seconds");
  sub->add_option("--t-flush", o.t_flush, "latency model: flush seconds");
  sub->add_option("--t-victim", o.t_victim, "latency model: victim seconds");
}

ExperimentSpec build_spec(const CliOverrides& o, ExperimentKind kind) {
  ExperimentSpec spec;
  if (!o.spec_path.empty()) spec = parse_spec_file(o.spec_path);
  spec.kind = kind;
  if (!o.geometry.empty()) {
    spec.geometries.clear();
    for (const auto& g : o.geometry)
      spec.geometries.push_back(detail::parse_geometry(g, 0));
  }
  if (!o.ks.empty()) spec.ks = o.ks;
  if (!o.ts.empty()) spec.ts = o.ts;
  if (!o.fs.empty()) spec.fs = o.fs;
  if (!o.ss.empty()) {
    spec.ss.clear();
    for (uint64_t s : o.ss) spec.ss.push_back(static_cast<uint32_t>(s));
  }
  if (o.batch) spec.batch_size = o.batch;
  if (o.bits) spec.bits = o.bits;
  if (o.pilot) spec.pilot_bits = static_cast<uint32_t>(o.pilot);
  if (o.exploit_trials) spec.exploit_trials = o.exploit_trials;
  if (o.trials >= 0) spec.trials = static_cast<uint64_t>(o.trials);
  if (o.paper_scale) spec.paper_scale = true;
  if (o.seed >= 0) spec.master_seed = static_cast<uint64_t>(o.seed);
  if (!o.mode.empty()) {
    if (o.mode == "flush")
      spec.mode = ProfilingConfig::InterIteration::Flush;
    else if (o.mode == "proceed")
      spec.mode = ProfilingConfig::InterIteration::ProceedNormally;
    else
      throw ConfigError("--mode: expected flush|proceed, got '" + o.mode + "'");
  }
  if (o.flush_accesses) spec.flush_accesses = o.flush_accesses;
  if (o.reuse) spec.reuse_candidates = true;
  if (!o.out.empty()) spec.out_path = o.out;
  if (!o.format.empty()) {
    if (o.format == "csv")
      spec.format = ReportFormat::Csv;
    else if (o.format == "json")
      spec.format = ReportFormat::Json;
    else
      throw ConfigError("--format: expected csv|json, got '" + o.format + "'");
  }
  if (o.threads >= 0) spec.threads = static_cast<uint32_t>(o.threads);
  if (!o.dump_trials.empty()) spec.dump_trials_path = o.dump_trials;
  if (o.t_hit >= 0) spec.latency.t_hit = o.t_hit;
  if (o.t_miss >= 0) spec.latency.t_miss = o.t_miss;
  if (o.t_flush >= 0) spec.latency.t_flush = o.t_flush;
  if (o.t_victim >= 0) spec.latency.t_victim = o.t_victim;
  return spec;
}

int run_spec(const ExperimentSpec& spec) {
  RunResult res;
  int code = run_and_write(spec, &res);
  // Always echo the CSV view so batch runs are greppable.
  std::fputs(to_csv(res).c_str(), stdout);
  if (!spec.out_path.empty())
    std::fprintf(stderr, "report written to %s\n", spec.out_path.c_str());
  if (code != 0) std::fprintf(stderr, "one or more cells failed\n");
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomized-cache eviction profiling and covert channel simulator"};
  app.require_subcommand(1);

  CliOverrides po, co, eo, pr;

  CLI::App* profile = app.add_subcommand(
      "profile", "prime+prune+probe eviction-set profiling sweep");
  add_common(profile, po);
  profile->add_option("--k", po.ks, "candidate-set sizes");
  profile->add_option("--t", po.ts, "target collision counts");
  profile->add_option("--mode", po.mode, "inter-iteration handling: flush|proceed");
  profile->add_flag("--reuse-candidates", po.reuse,
                    "reuse one candidate set across iterations");
  profile->add_option("--dump-trials", po.dump_trials,
                      "write per-trial rows to this CSV");

  CLI::App* covert = app.add_subcommand(
      "covert", "covert-channel profiling, calibration and transmission");
  add_common(covert, co);
  covert->add_option("--f", co.fs, "collision targets as fraction of slots");
  covert->add_option("--s", co.ss, "bits per sequence");
  covert->add_option("--batch", co.batch, "addresses per party per round");
  covert->add_option("--bits", co.bits, "random message bits to transmit");
  covert->add_option("--pilot", co.pilot, "pilot bits for threshold calibration");

  CLI::App* exploit = app.add_subcommand(
      "exploit", "profile t addresses, then measure eviction probability");
  add_common(exploit, eo);
  exploit->add_option("--k", eo.ks, "candidate-set size for profiling");
  exploit->add_option("--t", eo.ts, "eviction-set sizes");
  exploit->add_option("--exploit-trials", eo.exploit_trials,
                      "Monte Carlo trials for the eviction estimate");

  CLI::App* predict = app.add_subcommand(
      "predict", "closed-form predictions, no simulation");
  add_common(predict, pr);
  predict->add_option("--k", pr.ks, "candidate-set sizes");
  predict->add_option("--t", pr.ts, "target collision counts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (profile->parsed()) return run_spec(build_spec(po, ExperimentKind::Profile));
    if (covert->parsed()) return run_spec(build_spec(co, ExperimentKind::Covert));
    if (exploit->parsed()) return run_spec(build_spec(eo, ExperimentKind::Exploit));
    if (predict->parsed()) return run_spec(build_spec(pr, ExperimentKind::Predict));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
