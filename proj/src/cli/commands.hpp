#pragma once

#include <cstdint>
#include <string>

namespace bwbroker::cli {

struct RunOptions {
  std::string scenario_path;
  std::string out_dir;     // empty: next to the scenario as <name>_out
  int64_t seed = -1;       // -1: scenario's own seed
  bool gnuplot = false;    // also emit a companion plot script
};

// Runs a scenario, writes util/flows/alloc/queues CSVs plus summary.json,
// prints one line per embedded assertion. Exit codes: 0 all assertions pass,
// 1 some assertion failed, 2 the scenario could not be loaded.
int cmd_run(const RunOptions& opts);

struct AllocOptions {
  std::string policy_path;
  std::string demands_path;  // optional; absent means all leaves idle
  int bench_n = 0;           // > 0: time single-level water-fill at this size
};

// Prints per-leaf allocations and limited flags for a policy + demands pair.
int cmd_alloc(const AllocOptions& opts);

struct BoundOptions {
  double capacity_bps = 10e9;
  double rho = 0.0;
  double sigma_bits = -1;   // direct sigma, or derived from iterations below
  int conv_iters = 0;
  double interval_s = 500e-6;
  double burst_bits = 0;
  double flow_bytes = 0;
  // M/M/1 quantile mode
  double quantile = -1;
  double mu_per_sec = 0;
};

// Prints the worst-case FCT bound (or the M/M/1 quantile in quantile mode).
int cmd_bound(const BoundOptions& opts);

// Times single-level water-fill invocations and prints a table.
int cmd_bench(int n, int repeats);

// Single-level water-fill timing used by cmd_bench and the CLI's --bench;
// returns mean seconds per invocation at size n.
double bench_water_fill_seconds(int n, int repeats, uint64_t seed = 42);

}  // namespace bwbroker::cli
