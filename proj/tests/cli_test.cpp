#include "cli/commands.hpp"

#include <cstdlib>
#include <filesystem>

#include "gtest/gtest.h"

namespace bwbroker::cli {
namespace {

std::string scenario_dir() {
  const char* env = std::getenv("BWBROKER_SCENARIOS");
  return env ? env : "scenarios";
}

TEST(CmdRun, MissingScenarioExitsTwo) {
  RunOptions opts;
  opts.scenario_path = "/nonexistent/scenario.json";
  EXPECT_EQ(cmd_run(opts), 2);
}

TEST(CmdAlloc, BadInputsExitTwo) {
  AllocOptions opts;
  opts.policy_path = "/nonexistent/policy.json";
  EXPECT_EQ(cmd_alloc(opts), 2);

  opts.policy_path = scenario_dir() + "/policies/vm_dfs_rack.json";
  opts.demands_path = "/nonexistent/demands.json";
  EXPECT_EQ(cmd_alloc(opts), 2);
}

TEST(CmdAlloc, WorkedExampleExitsZero) {
  AllocOptions opts;
  opts.policy_path = scenario_dir() + "/policies/vm_dfs_rack.json";
  opts.demands_path = scenario_dir() + "/demands/all_active.json";
  EXPECT_EQ(cmd_alloc(opts), 0);
}

TEST(CmdBound, TableValuesAndDivergenceWarning) {
  BoundOptions opts;
  opts.capacity_bps = 10e9;
  opts.rho = 0.8;
  opts.conv_iters = 15;
  opts.interval_s = 500e-6;
  opts.flow_bytes = 200e3;
  EXPECT_EQ(cmd_bound(opts), 0);

  opts.rho = 1.0;  // unstable queue: warn, nonzero exit
  EXPECT_EQ(cmd_bound(opts), 1);

  BoundOptions quantile;
  quantile.quantile = 0.99;
  quantile.mu_per_sec = 1250;
  quantile.rho = 0.8;
  EXPECT_EQ(cmd_bound(quantile), 0);
}

TEST(CmdBench, RunsTinySweep) { EXPECT_EQ(cmd_bench(1000, 2), 0); }

}  // namespace
}  // namespace bwbroker::cli
