#include "bwbroker/rack_broker.hpp"

#include <memory>

#include "bwbroker/errors.hpp"
#include "gtest/gtest.h"

namespace bwbroker {
namespace {

constexpr int64_t kGb = 1'000'000'000;
constexpr int64_t kMb = 1'000'000;
constexpr uint32_t kVm = 1;
constexpr uint32_t kDfs = 2;

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

// Two machines, two services (VM capped 1G, DFS min 6 max 8), rack 10G:
// the paper's worked example as one rack broker would see it.
struct Fixture {
  std::shared_ptr<PolicyTree> up;
  std::shared_ptr<PolicyTree> down;
  RackLeafIndex index;

  Fixture(int machines = 2, int64_t capacity = 10 * kGb) {
    std::vector<PolicyNode> up_nodes;
    up_nodes.push_back(make_node(0, std::nullopt, Bandwidth::bps(0), Bandwidth::unlimited()));
    up_nodes.push_back(make_node(kVm, 0, Bandwidth::bps(0), Bandwidth::gbps(1)));
    up_nodes.push_back(make_node(kDfs, 0, Bandwidth::gbps(6), Bandwidth::gbps(8)));
    auto down_nodes = up_nodes;
    for (int m = 0; m < machines; ++m) {
      for (uint32_t svc : {kVm, kDfs}) {
        PolicyNode leaf;
        leaf.id = 1000 + static_cast<ServiceId>(m) * 10 + svc;
        leaf.parent = svc;
        up_nodes.push_back(leaf);
        index.up[{static_cast<uint32_t>(m), svc}] = leaf.id;
        leaf.id += 5;
        down_nodes.push_back(leaf);
        index.down[{static_cast<uint32_t>(m), svc}] = leaf.id;
      }
    }
    up = std::make_shared<PolicyTree>(ContentionPoint::kRackUp, capacity, up_nodes);
    down = std::make_shared<PolicyTree>(ContentionPoint::kRackDown, capacity, down_nodes);
  }

  std::unique_ptr<RackBroker> broker(uint32_t machine, RackBrokerConfig cfg = {}) const {
    auto b = std::make_unique<RackBroker>(machine, std::vector<uint32_t>{0, 1}, cfg);
    b->set_rack_trees(up, down, index);
    return b;
  }
};

TEST(LocalReport, EntriesAscendAndCarryBothDirections) {
  Fixture fx;
  auto broker = fx.broker(0);
  UsageReport report = broker->make_local_report(
      1'000'000, {{kVm, 1 * kGb}, {kDfs, 2 * kGb}}, {{kVm, 3 * kGb}, {kDfs, 0}});
  ASSERT_EQ(report.entries.size(), 4u);
  for (size_t i = 1; i < report.entries.size(); ++i) {
    EXPECT_LT(report.entries[i - 1].first, report.entries[i].first);
  }
  EXPECT_EQ(report.sender, 0u);
  EXPECT_EQ(report.timestamp_us, 1'000'000u);
}

TEST(LocalReport, UtilizationIsBytesOverInterval) {
  // 125MB over one second is 1Gb/s.
  EXPECT_EQ(static_cast<int64_t>(wire_utilization(125'000'000 * 8)), 1 * kGb);
}

TEST(OnReport, StoresFreshDropsStaleRejectsForeign) {
  Fixture fx;
  auto broker = fx.broker(0);
  UsageReport r1;
  r1.sender = 1;
  r1.timestamp_us = 2'000'000;
  broker->on_report(r1, 2 * kSecond);

  UsageReport older = r1;
  older.timestamp_us = 1'000'000;
  broker->on_report(older, 2 * kSecond);  // silently dropped

  UsageReport foreign = r1;
  foreign.sender = 9;
  EXPECT_THROW(broker->on_report(foreign, 2 * kSecond), UnknownMachineError);
}

TEST(Tick, ReproducesTheWorkedExampleAcrossTwoMachines) {
  Fixture fx;
  auto b0 = fx.broker(0);
  auto b1 = fx.broker(1);

  // Both machines saturate both services.
  std::map<uint32_t, int64_t> usage{{kVm, 10 * kGb}, {kDfs, 10 * kGb}};
  UsageReport r0 = b0->make_local_report(1'000'000, usage, usage);
  UsageReport r1 = b1->make_local_report(1'000'000, usage, usage);
  b0->on_report(r1, kSecond);
  b1->on_report(r0, kSecond);

  BrokerOutput o0 = b0->tick(kSecond, usage, usage);
  BrokerOutput o1 = b1->tick(kSecond, usage, usage);

  // (M,VM) get 0.5 each and (M,DFS) get 4 each, identically on both brokers.
  for (const BrokerOutput* out : {&o0, &o1}) {
    EXPECT_EQ(out->up_alloc.at(fx.index.up_leaf(0, kVm)).rate, 500 * kMb);
    EXPECT_EQ(out->up_alloc.at(fx.index.up_leaf(1, kVm)).rate, 500 * kMb);
    EXPECT_EQ(out->up_alloc.at(fx.index.up_leaf(0, kDfs)).rate, 4 * kGb);
    EXPECT_EQ(out->up_alloc.at(fx.index.up_leaf(1, kDfs)).rate, 4 * kGb);
  }
  EXPECT_EQ(o0.up_alloc, o1.up_alloc);  // symmetry: bit-identical allocations
  EXPECT_EQ(o0.local_tx.at(kVm).cap_bps, 500 * kMb);
  EXPECT_EQ(o0.local_tx.at(kDfs).cap_bps, 4 * kGb);
}

TEST(Tick, SingleMachineRackDegeneratesToLocalWaterFill) {
  Fixture fx(1);
  auto broker = std::make_unique<RackBroker>(0, std::vector<uint32_t>{0});
  broker->set_rack_trees(fx.up, fx.down, fx.index);
  std::map<uint32_t, int64_t> usage{{kVm, 10 * kGb}, {kDfs, 10 * kGb}};
  BrokerOutput out = broker->tick(kSecond, usage, usage);
  EXPECT_EQ(out.up_alloc.at(fx.index.up_leaf(0, kVm)).rate, 1 * kGb);
  EXPECT_EQ(out.up_alloc.at(fx.index.up_leaf(0, kDfs)).rate, 8 * kGb);
}

TEST(Tick, StalePeersDropOutAfterTimeout) {
  Fixture fx;
  RackBrokerConfig cfg;
  cfg.peer_timeout_ns = 5 * kSecond;
  auto b0 = fx.broker(0, cfg);

  std::map<uint32_t, int64_t> peer_usage{{kDfs, 8 * kGb}};
  auto b1 = fx.broker(1, cfg);
  UsageReport r1 = b1->make_local_report(1'000'000, peer_usage, {});
  b0->on_report(r1, kSecond);

  std::map<uint32_t, int64_t> own{{kDfs, 8 * kGb}};
  BrokerOutput fresh = b0->tick(2 * kSecond, own, {});
  // Peer still fresh: DFS node splits between the two machines.
  EXPECT_EQ(fresh.up_alloc.at(fx.index.up_leaf(0, kDfs)).rate, 4 * kGb);

  BrokerOutput stale = b0->tick(8 * kSecond, own, {});
  // Peer aged out: the local machine's leaf takes the whole DFS cap.
  EXPECT_EQ(stale.up_alloc.at(fx.index.up_leaf(0, kDfs)).rate, 8 * kGb);
  EXPECT_EQ(stale.up_alloc.at(fx.index.up_leaf(1, kDfs)).rate, 0);
}

TEST(Tick, ConvergesWithinTwoIntervalsAfterDemandStep) {
  Fixture fx;
  auto broker = fx.broker(0);
  auto peer = fx.broker(1);

  // Interval 1: both DFS leaves saturated, each limited to 4G.
  std::map<uint32_t, int64_t> both{{kDfs, 10 * kGb}};
  UsageReport pr = peer->make_local_report(1'000'000, both, {});
  broker->on_report(pr, kSecond);
  BrokerOutput t1 = broker->tick(kSecond, both, {});
  EXPECT_EQ(t1.up_alloc.at(fx.index.up_leaf(0, kDfs)).rate, 4 * kGb);

  // Peer goes idle; usage measured at the cap for us, zero for them.
  std::map<uint32_t, int64_t> pinned{{kDfs, 4 * kGb}};
  UsageReport idle = peer->make_local_report(2'000'000, {{kDfs, 0}}, {});
  broker->on_report(idle, 2 * kSecond);
  BrokerOutput t2 = broker->tick(2 * kSecond, pinned, {});
  // Tick 1 after the step: our leaf is released (headroom demand satisfied).
  EXPECT_FALSE(t2.up_alloc.at(fx.index.up_leaf(0, kDfs)).limited);
  EXPECT_EQ(t2.local_tx.at(kDfs).cap_bps, 8 * kGb);

  // Tick 2: having ramped, the leaf owns the full DFS allocation.
  std::map<uint32_t, int64_t> ramped{{kDfs, 8 * kGb}};
  broker->on_report(peer->make_local_report(3'000'000, {{kDfs, 0}}, {}), 3 * kSecond);
  BrokerOutput t3 = broker->tick(3 * kSecond, ramped, {});
  EXPECT_EQ(t3.up_alloc.at(fx.index.up_leaf(0, kDfs)).rate, 8 * kGb);
}

TEST(Tick, MachinePolicyConstrainsLocalCaps) {
  Fixture fx;
  std::vector<PolicyNode> mnodes;
  mnodes.push_back(make_node(0, std::nullopt, Bandwidth::bps(0), Bandwidth::unlimited()));
  mnodes.push_back(make_node(kVm, 0, Bandwidth::bps(0), Bandwidth::mbps(200)));
  mnodes.push_back(make_node(kDfs, 0, Bandwidth::bps(0), Bandwidth::unlimited()));
  auto machine_tree =
      std::make_shared<PolicyTree>(ContentionPoint::kMachineTx, 10 * kGb, mnodes);

  auto broker = fx.broker(0);
  broker->set_machine_trees(machine_tree, machine_tree);
  std::map<uint32_t, int64_t> usage{{kVm, 10 * kGb}, {kDfs, 10 * kGb}};
  BrokerOutput out = broker->tick(kSecond, usage, usage);
  // The machine-level 200Mb/s VM cap is tighter than the rack's 0.5G share.
  EXPECT_EQ(out.local_tx.at(kVm).cap_bps, 200 * kMb);
}

TEST(FabricLimits, OverridesApplyAndRevert) {
  Fixture fx;
  RackBrokerConfig cfg;
  cfg.fabric_timeout_ns = 50 * kSecond;
  auto broker = fx.broker(0, cfg);

  broker->apply_fabric_limits({{kDfs, Bandwidth::gbps(2)}}, 10 * kSecond);
  EXPECT_TRUE(broker->has_fabric_limit(kDfs));
  std::map<uint32_t, int64_t> usage{{kDfs, 10 * kGb}};
  BrokerOutput out = broker->tick(11 * kSecond, usage, {});
  EXPECT_EQ(out.local_tx.at(kDfs).cap_bps, 2 * kGb);

  // No revert before the timeout, exact revert at +50s.
  EXPECT_FALSE(broker->fabric_watchdog(59 * kSecond));
  EXPECT_TRUE(broker->fabric_watchdog(60 * kSecond));
  EXPECT_FALSE(broker->has_fabric_limit(kDfs));
  out = broker->tick(61 * kSecond, usage, {});
  EXPECT_EQ(out.local_tx.at(kDfs).cap_bps, 8 * kGb);  // static policy again
}

TEST(Leader, LowestFreshMachineWins) {
  Fixture fx;
  auto b1 = fx.broker(1);
  EXPECT_EQ(b1->current_leader(kSecond), 1u);  // alone, self

  UsageReport r0;
  r0.sender = 0;
  r0.timestamp_us = 1;
  b1->on_report(r0, kSecond);
  EXPECT_EQ(b1->current_leader(kSecond), 0u);
  // Machine 0 goes silent past the timeout: leadership falls back.
  EXPECT_EQ(b1->current_leader(10 * kSecond), 1u);
}

TEST(FabricReport, TracksMaxOfPerTickUsage) {
  Fixture fx;
  auto broker = fx.broker(0);
  broker->tick(1 * kSecond, {{kDfs, 3 * kGb}}, {});
  broker->tick(2 * kSecond, {{kDfs, 7 * kGb}}, {});
  broker->tick(3 * kSecond, {{kDfs, 1 * kGb}}, {});
  UsageReport report = broker->collect_fabric_report(3'000'000, 4);
  ASSERT_EQ(report.entries.size(), 2u);  // both services tracked
  EXPECT_EQ(report.sender, 4u);
  int64_t dfs = -1;
  for (const auto& [svc, util] : report.entries) {
    if (svc == kDfs) dfs = static_cast<int64_t>(util);
  }
  EXPECT_EQ(dfs, 7 * kGb);
  // Collection resets the maxima.
  UsageReport next = broker->collect_fabric_report(4'000'000, 4);
  EXPECT_TRUE(next.entries.empty());
}

}  // namespace
}  // namespace bwbroker
