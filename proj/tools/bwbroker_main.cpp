#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "bwbroker/units.hpp"
#include "cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bwbroker: hierarchical bandwidth brokers, shapers, and simulator"};
  app.require_subcommand(1);

  bwbroker::cli::RunOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run a scenario file and write traces");
  run->add_option("scenario", run_opts.scenario_path, "scenario JSON file")->required();
  run->add_option("--seed", run_opts.seed, "override the scenario seed");
  run->add_option("--out", run_opts.out_dir, "output directory for CSV traces");
  run->add_flag("--gnuplot", run_opts.gnuplot, "emit a companion gnuplot script");

  bwbroker::cli::AllocOptions alloc_opts;
  CLI::App* alloc = app.add_subcommand("alloc", "standalone hierarchical allocation");
  alloc->add_option("policy", alloc_opts.policy_path, "policy tree JSON file")->required();
  alloc->add_option("demands", alloc_opts.demands_path, "per-leaf demands JSON file");
  alloc->add_option("--bench", alloc_opts.bench_n, "time single-level water-fill at size N");

  bwbroker::cli::BoundOptions bound_opts;
  std::string sigma_arg, flow_arg, capacity_arg = "10Gb/s";
  CLI::App* bound = app.add_subcommand("bound", "worst-case FCT bound / M/M/1 quantile");
  bound->add_option("--capacity", capacity_arg, "reference capacity (e.g. 10Gb/s)");
  bound->add_option("--rho", bound_opts.rho, "long-term load in (0,1)");
  bound->add_option("--sigma", sigma_arg, "burst term as bandwidth*time, in bits");
  bound->add_option("--conv-iters", bound_opts.conv_iters,
                    "derive sigma from convergence iterations");
  bound->add_option("--interval", bound_opts.interval_s, "meter interval seconds");
  bound->add_option("--flow-size", flow_arg, "flow size (e.g. 200kB)");
  bound->add_option("--quantile", bound_opts.quantile, "M/M/1 quantile mode: p in [0,1)");
  bound->add_option("--mu", bound_opts.mu_per_sec, "M/M/1 service rate, flows per second");

  int bench_n = 100000, bench_repeats = 1;
  CLI::App* bench = app.add_subcommand("bench", "time the water-fill at growing sizes");
  bench->add_option("--n", bench_n, "largest size");
  bench->add_option("--repeats", bench_repeats, "minimum repeats per size");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return bwbroker::cli::cmd_run(run_opts);
  if (alloc->parsed()) return bwbroker::cli::cmd_alloc(alloc_opts);
  if (bound->parsed()) {
    try {
      bound_opts.capacity_bps =
          static_cast<double>(bwbroker::parse_bandwidth(capacity_arg).bits_per_sec());
      if (!sigma_arg.empty()) bound_opts.sigma_bits = std::stod(sigma_arg);
      if (!flow_arg.empty())
        bound_opts.flow_bytes = static_cast<double>(bwbroker::parse_bytes(flow_arg));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 2;
    }
    return bwbroker::cli::cmd_bound(bound_opts);
  }
  if (bench->parsed()) return bwbroker::cli::cmd_bench(bench_n, bench_repeats);
  return 2;
}
