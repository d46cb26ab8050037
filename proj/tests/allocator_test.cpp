#include "bwbroker/allocator.hpp"

#include <algorithm>
#include <numeric>

#include "bwbroker/errors.hpp"
#include "bwbroker/sim/rng.hpp"
#include "gtest/gtest.h"
#include "generators.hpp"
#include "oracles.hpp"

namespace bwbroker {
namespace {

constexpr int64_t kGb = 1'000'000'000;
constexpr int64_t kMb = 1'000'000;

PolicyNode make_node(ServiceId id, std::optional<ServiceId> parent, Bandwidth min_bw,
                     Bandwidth max_bw, double weight = 1.0) {
  PolicyNode n;
  n.id = id;
  n.parent = parent;
  n.min_bw = min_bw;
  n.max_bw = max_bw;
  n.weight = weight;
  return n;
}

PolicyTree vm_dfs_tree() {
  std::vector<PolicyNode> nodes;
  nodes.push_back(make_node(0, std::nullopt, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(1, 0, Bandwidth::bps(0), Bandwidth::gbps(1)));
  nodes.push_back(make_node(2, 0, Bandwidth::gbps(6), Bandwidth::gbps(8)));
  nodes.push_back(make_node(11, 1, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(12, 1, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(21, 2, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(22, 2, Bandwidth::bps(0), Bandwidth::unlimited()));
  return PolicyTree(ContentionPoint::kRackUp, 10 * kGb, nodes);
}

TEST(WaterFill, NoContentionMeansNoLimits) {
  std::vector<int64_t> alloc = water_fill({2 * kGb, 3 * kGb}, {1, 1}, 10 * kGb);
  EXPECT_EQ(alloc[0], 2 * kGb);
  EXPECT_EQ(alloc[1], 3 * kGb);
}

TEST(WaterFill, ProgressiveFillingExample) {
  // demands 2/4/10 over 10: the two big ones level at 4.
  std::vector<int64_t> alloc = water_fill({2 * kGb, 4 * kGb, 10 * kGb}, {1, 1, 1}, 10 * kGb);
  EXPECT_EQ(alloc[0], 2 * kGb);
  EXPECT_EQ(alloc[1], 4 * kGb);
  EXPECT_EQ(alloc[2], 4 * kGb);
}

TEST(WaterFill, WeightsSplitTheExcess) {
  std::vector<Bandwidth> demands(2, Bandwidth::unlimited());
  std::vector<int64_t> alloc =
      water_fill(demands, {1, 2}, {0, 0}, {Bandwidth::unlimited(), Bandwidth::unlimited()},
                 9 * kGb);
  EXPECT_EQ(alloc[0], 3 * kGb);
  EXPECT_EQ(alloc[1], 6 * kGb);
}

TEST(WaterFill, MinsPreAllocatedThenResidualFilled) {
  std::vector<Bandwidth> demands(2, Bandwidth::unlimited());
  std::vector<int64_t> alloc =
      water_fill(demands, {1, 1}, {6 * kGb, 0},
                 {Bandwidth::unlimited(), Bandwidth::unlimited()}, 10 * kGb);
  EXPECT_EQ(alloc[0], 6 * kGb);
  EXPECT_EQ(alloc[1], 4 * kGb);
}

TEST(WaterFill, GuaranteeHonoredUnderContention) {
  // Both want everything; the guaranteed service keeps its min, and the
  // leftover levels out.
  std::vector<Bandwidth> demands(3, Bandwidth::unlimited());
  std::vector<int64_t> alloc = water_fill(
      demands, {1, 1, 1}, {6 * kGb, 0, 0},
      {Bandwidth::unlimited(), Bandwidth::unlimited(), Bandwidth::unlimited()}, 10 * kGb);
  EXPECT_EQ(alloc[0], 6 * kGb);
  EXPECT_EQ(alloc[1], 2 * kGb);
  EXPECT_EQ(alloc[2], 2 * kGb);
}

TEST(WaterFill, InfeasibleMins) {
  std::vector<Bandwidth> demands(2, Bandwidth::unlimited());
  EXPECT_THROW(water_fill(demands, {1, 1}, {6 * kGb, 5 * kGb},
                          {Bandwidth::unlimited(), Bandwidth::unlimited()}, 10 * kGb),
               InfeasibleMinsError);
}

TEST(WaterFill, ConservationExactUnderContention) {
  sim::Rng rng(11, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.uniform_int(8);
    std::vector<int64_t> demands(n);
    std::vector<double> weights(n);
    for (size_t i = 0; i < n; ++i) {
      demands[i] = static_cast<int64_t>(rng.uniform(0, 4e9));
      weights[i] = 0.5 + rng.uniform(0, 3.5);
    }
    const int64_t capacity = static_cast<int64_t>(rng.uniform(1e8, 6e9));
    std::vector<int64_t> alloc = water_fill(demands, weights, capacity);
    const int64_t total = std::accumulate(alloc.begin(), alloc.end(), int64_t{0});
    const int64_t demand_sum = std::accumulate(demands.begin(), demands.end(), int64_t{0});
    EXPECT_EQ(total, std::min(capacity, demand_sum));
    for (size_t i = 0; i < n; ++i) EXPECT_LE(alloc[i], demands[i]);
  }
}

TEST(WaterFill, WeightedFairnessAmongUnsatisfied) {
  sim::Rng rng(12, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 2 + rng.uniform_int(5);
    std::vector<int64_t> demands(n);
    std::vector<double> weights(n);
    for (size_t i = 0; i < n; ++i) {
      demands[i] = static_cast<int64_t>(rng.uniform(1e8, 5e9));
      weights[i] = (i % 2) ? 2.0 : 1.0;
    }
    const int64_t capacity = static_cast<int64_t>(rng.uniform(1e8, 3e9));
    std::vector<int64_t> alloc = water_fill(demands, weights, capacity);
    // Services still below their demand share in proportion to weight.
    double level = -1;
    for (size_t i = 0; i < n; ++i) {
      if (alloc[i] >= demands[i]) continue;
      const double this_level = static_cast<double>(alloc[i]) / weights[i];
      if (level < 0) level = this_level;
      EXPECT_NEAR(this_level, level, 1e6);
    }
  }
}

TEST(WaterFill, OrderInvariance) {
  std::vector<int64_t> demands = {1 * kGb, 7 * kGb, 3 * kGb, 5 * kGb};
  std::vector<double> weights = {1.0, 2.0, 0.5, 4.0};
  std::vector<int64_t> base = water_fill(demands, weights, 9 * kGb);

  const std::vector<size_t> perm = {2, 0, 3, 1};
  std::vector<int64_t> pd(4);
  std::vector<double> pw(4);
  for (size_t i = 0; i < 4; ++i) {
    pd[i] = demands[perm[i]];
    pw[i] = weights[perm[i]];
  }
  std::vector<int64_t> permuted = water_fill(pd, pw, 9 * kGb);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(permuted[i], base[perm[i]]);
  }
}

TEST(WaterFill, IdempotentOnItsOwnOutput) {
  std::vector<int64_t> demands = {2 * kGb, 5 * kGb, 9 * kGb};
  std::vector<double> weights = {1, 1, 2};
  std::vector<int64_t> first = water_fill(demands, weights, 8 * kGb);
  std::vector<int64_t> second = water_fill(first, weights, 8 * kGb);
  EXPECT_EQ(first, second);
}

TEST(AggregateDemands, CapsAndSums) {
  std::vector<PolicyNode> nodes;
  nodes.push_back(make_node(0, std::nullopt, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(1, 0, Bandwidth::bps(0), Bandwidth::gbps(1)));
  nodes.push_back(make_node(11, 1, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(12, 1, Bandwidth::bps(0), Bandwidth::unlimited()));
  PolicyTree tree(ContentionPoint::kRackUp, 10 * kGb, nodes);

  DemandVector demands;
  demands[11] = Bandwidth::mbps(700);
  demands[12] = Bandwidth::mbps(900);
  EXPECT_EQ(aggregate_demands(tree, demands).at(1).bits_per_sec(), 1 * kGb);

  demands[11] = Bandwidth::mbps(200);
  demands[12] = Bandwidth::mbps(300);
  EXPECT_EQ(aggregate_demands(tree, demands).at(1).bits_per_sec(), 500 * kMb);

  demands.erase(12);
  EXPECT_THROW(aggregate_demands(tree, demands), MissingLeafDemandError);
}

TEST(Distribute, PaperWorkedExampleAllActive) {
  PolicyTree tree = vm_dfs_tree();
  DemandVector demands;
  for (ServiceId leaf : tree.leaves()) demands[leaf] = Bandwidth::unlimited();
  Allocation alloc = distribute(tree, aggregate_demands(tree, demands));
  EXPECT_EQ(alloc.nodes.at(11).rate, 500 * kMb);
  EXPECT_EQ(alloc.nodes.at(12).rate, 500 * kMb);
  EXPECT_EQ(alloc.nodes.at(21).rate, 4 * kGb);
  EXPECT_EQ(alloc.nodes.at(22).rate, 4 * kGb);
  for (ServiceId leaf : tree.leaves()) {
    EXPECT_TRUE(alloc.nodes.at(leaf).limited);
  }
}

TEST(Distribute, PaperWorkedExampleDfs2Idle) {
  PolicyTree tree = vm_dfs_tree();
  DemandVector demands;
  demands[11] = Bandwidth::unlimited();
  demands[12] = Bandwidth::unlimited();
  demands[21] = Bandwidth::unlimited();
  demands[22] = Bandwidth::bps(0);
  Allocation alloc = distribute(tree, aggregate_demands(tree, demands));
  EXPECT_EQ(alloc.nodes.at(21).rate, 8 * kGb);  // DFS max binds, not the 9Gb/s leftover
  EXPECT_EQ(alloc.nodes.at(22).rate, 0);
}

TEST(Distribute, SingleChildDegenerate) {
  std::vector<PolicyNode> nodes;
  nodes.push_back(make_node(0, std::nullopt, Bandwidth::bps(0), Bandwidth::unlimited()));
  nodes.push_back(make_node(1, 0, Bandwidth::bps(0), Bandwidth::gbps(3)));
  nodes.push_back(make_node(11, 1, Bandwidth::bps(0), Bandwidth::unlimited()));
  PolicyTree tree(ContentionPoint::kRackUp, 10 * kGb, nodes);
  DemandVector demands;
  demands[11] = Bandwidth::gbps(5);
  Allocation alloc = distribute(tree, aggregate_demands(tree, demands));
  EXPECT_EQ(alloc.nodes.at(11).rate, 3 * kGb);
  EXPECT_TRUE(alloc.nodes.at(11).limited);
}

TEST(RuntimePolicy, IdleLeavesGetStaticCaps) {
  PolicyTree tree = vm_dfs_tree();
  DemandVector demands;
  for (ServiceId leaf : tree.leaves()) demands[leaf] = Bandwidth::bps(0);
  RuntimeCaps caps = compute_runtime_policy(tree, demands);
  EXPECT_EQ(caps.leaf_caps.at(11).rate, 1 * kGb);  // VM aggregate cap
  EXPECT_EQ(caps.leaf_caps.at(21).rate, 8 * kGb);  // DFS cap
  for (ServiceId leaf : tree.leaves()) {
    EXPECT_FALSE(caps.leaf_caps.at(leaf).limited);
  }
}

TEST(RuntimePolicy, SingleActiveLeafGetsMostConstrainedCap) {
  PolicyTree tree = vm_dfs_tree();
  DemandVector demands;
  for (ServiceId leaf : tree.leaves()) demands[leaf] = Bandwidth::bps(0);
  demands[21] = Bandwidth::unlimited();
  RuntimeCaps caps = compute_runtime_policy(tree, demands);
  EXPECT_EQ(caps.leaf_caps.at(21).rate, 8 * kGb);
  EXPECT_TRUE(caps.leaf_caps.at(21).limited);
}

TEST(RuntimePolicy, CapsNeverExceedAncestorMaxes) {
  PolicyTree tree = vm_dfs_tree();
  sim::Rng rng(5, 9);
  for (int trial = 0; trial < 50; ++trial) {
    DemandVector demands;
    for (ServiceId leaf : tree.leaves()) {
      demands[leaf] = Bandwidth::bps(static_cast<int64_t>(rng.uniform(0, 12e9)));
    }
    RuntimeCaps caps = compute_runtime_policy(tree, demands);
    for (ServiceId leaf : tree.leaves()) {
      EXPECT_LE(caps.leaf_caps.at(leaf).rate, effective_cap(tree, leaf));
    }
  }
}

TEST(InflateLimitedDemand, HeadroomHoldAndRelease) {
  EXPECT_EQ(inflate_limited_demand(500, 1000, false), 500);
  EXPECT_EQ(inflate_limited_demand(1000, 1000, true), 1100);  // pinned at the cap
  EXPECT_EQ(inflate_limited_demand(980, 1000, true), 1100);   // within 95%
  // Active but suppressed below the cap: hold most of the allocation.
  EXPECT_EQ(inflate_limited_demand(100, 1000, true), 900);
  EXPECT_EQ(inflate_limited_demand(950, 1000, true), 1100);
  EXPECT_EQ(inflate_limited_demand(0, 1000, true), 0);  // a silent leaf releases
}

// ---------------------------------------------------------------------------
// Random hierarchical instances against the progressive-filling oracle;
// the acceptance suite runs the full 1000-case sweep.

TEST(DistributeOracle, MatchesProgressiveFillingOnRandomTrees) {
  sim::Rng rng(202, 77);
  for (int trial = 0; trial < 150; ++trial) {
    testgen::RandomCase rc = testgen::random_case(rng);
    ASSERT_TRUE(validate_tree(rc.tree).ok());
    Allocation alloc = distribute(rc.tree, aggregate_demands(rc.tree, rc.demands));
    std::map<int, int64_t> expect = oracle::allocate(rc.inst);
    for (ServiceId leaf : rc.tree.leaves()) {
      ASSERT_NEAR(static_cast<double>(alloc.nodes.at(leaf).rate),
                  static_cast<double>(expect.at(static_cast<int>(leaf))), 1e6)
          << "trial " << trial << " leaf " << leaf;
    }
  }
}

}  // namespace
}  // namespace bwbroker
