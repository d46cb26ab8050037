#include "bwbroker/rack_broker.hpp"

#include <algorithm>

#include "bwbroker/errors.hpp"

namespace bwbroker {

ServiceId RackLeafIndex::up_leaf(uint32_t machine, uint32_t service) const {
  auto it = up.find({machine, service});
  if (it == up.end()) {
    throw UnknownLeafError("no uplink leaf for machine " + std::to_string(machine) +
                           " service " + std::to_string(service));
  }
  return it->second;
}

ServiceId RackLeafIndex::down_leaf(uint32_t machine, uint32_t service) const {
  auto it = down.find({machine, service});
  if (it == down.end()) {
    throw UnknownLeafError("no downlink leaf for machine " + std::to_string(machine) +
                           " service " + std::to_string(service));
  }
  return it->second;
}

RackBroker::RackBroker(uint32_t machine, std::vector<uint32_t> rack_machines,
                       RackBrokerConfig cfg)
    : machine_(machine), rack_machines_(std::move(rack_machines)), cfg_(cfg) {
  std::sort(rack_machines_.begin(), rack_machines_.end());
}

void RackBroker::set_rack_trees(std::shared_ptr<const PolicyTree> up,
                                std::shared_ptr<const PolicyTree> down,
                                RackLeafIndex index) {
  base_up_ = std::move(up);
  base_down_ = std::move(down);
  index_ = std::move(index);
  up_owner_.clear();
  down_owner_.clear();
  for (const auto& [key, leaf] : index_.up) up_owner_[leaf] = key;
  for (const auto& [key, leaf] : index_.down) down_owner_[leaf] = key;
  rebuild_effective_up_tree();
}

void RackBroker::set_machine_trees(std::shared_ptr<const PolicyTree> tx,
                                   std::shared_ptr<const PolicyTree> rx) {
  machine_tx_ = std::move(tx);
  machine_rx_ = std::move(rx);
}

void RackBroker::rebuild_effective_up_tree() {
  if (!base_up_) return;
  effective_up_ = *base_up_;
  for (const auto& [svc, limit] : fabric_overrides_) {
    if (!effective_up_.has_node(svc)) continue;
    effective_up_.set_max_bw(svc, min(base_up_->node(svc).max_bw, limit));
  }
}

UsageReport RackBroker::make_local_report(
    uint64_t now_us, const std::map<uint32_t, int64_t>& tx_usage,
    const std::map<uint32_t, int64_t>& rx_usage) const {
  UsageReport report;
  report.sender = machine_;
  report.timestamp_us = now_us;
  for (const auto& [svc, bps] : tx_usage) {
    report.entries.emplace_back(index_.up_leaf(machine_, svc), wire_utilization(bps));
  }
  for (const auto& [svc, bps] : rx_usage) {
    report.entries.emplace_back(index_.down_leaf(machine_, svc), wire_utilization(bps));
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return report;
}

void RackBroker::on_report(const UsageReport& report, SimTime now) {
  if (!std::binary_search(rack_machines_.begin(), rack_machines_.end(), report.sender)) {
    throw UnknownMachineError("report from machine " + std::to_string(report.sender) +
                              " outside this rack");
  }
  auto it = peer_reports_.find(report.sender);
  if (it != peer_reports_.end() && report.timestamp_us < it->second.report.timestamp_us) {
    return;  // stale duplicate
  }
  peer_reports_[report.sender] = {report, now};
}

int64_t RackBroker::leaf_usage(ServiceId leaf, uint32_t owner, uint32_t service,
                               const std::map<uint32_t, int64_t>& local_usage,
                               bool /*is_up*/, SimTime now) const {
  if (owner == machine_) {
    auto it = local_usage.find(service);
    return it == local_usage.end()
               ? 0
               : static_cast<int64_t>(wire_utilization(it->second));
  }
  auto it = peer_reports_.find(owner);
  if (it == peer_reports_.end()) return 0;
  if (now - it->second.last_seen > cfg_.peer_timeout_ns) return 0;
  for (const auto& [id, util] : it->second.report.entries) {
    if (id == leaf) return static_cast<int64_t>(util);
  }
  return 0;
}

namespace {

// Measured usage -> demand estimate, opening up headroom where the previous
// limiter was binding, then runs the two-pass allocation.
struct TreeRun {
  DemandVector demands;
  Allocation alloc;
};

TreeRun run_tree(const PolicyTree& tree,
                 const std::map<ServiceId, int64_t>& measured,
                 const std::map<ServiceId, NodeAllocation>& prev) {
  TreeRun out;
  for (ServiceId leaf : tree.leaves()) {
    auto m = measured.find(leaf);
    int64_t usage = m == measured.end() ? 0 : m->second;
    auto p = prev.find(leaf);
    int64_t demand = p == prev.end()
                         ? usage
                         : inflate_limited_demand(usage, p->second.rate, p->second.limited);
    out.demands[leaf] = Bandwidth::bps(demand);
  }
  DemandVector agg = aggregate_demands(tree, out.demands);
  out.alloc = distribute(tree, agg);
  return out;
}

}  // namespace

BrokerOutput RackBroker::tick(SimTime now, const std::map<uint32_t, int64_t>& tx_usage,
                              const std::map<uint32_t, int64_t>& rx_usage) {
  BrokerOutput out;
  if (!base_up_ || !base_down_) return out;

  // Measured utilization per rack-tree leaf, own counters plus fresh peers.
  std::map<ServiceId, int64_t> up_measured;
  std::map<ServiceId, int64_t> down_measured;
  for (const auto& [leaf, key] : up_owner_) {
    up_measured[leaf] = leaf_usage(leaf, key.first, key.second, tx_usage, true, now);
  }
  for (const auto& [leaf, key] : down_owner_) {
    down_measured[leaf] = leaf_usage(leaf, key.first, key.second, rx_usage, false, now);
  }

  TreeRun up = run_tree(effective_up_, up_measured, prev_up_);
  TreeRun down = run_tree(*base_down_, down_measured, prev_down_);

  for (ServiceId leaf : effective_up_.leaves()) {
    out.up_alloc[leaf] = up.alloc.nodes.at(leaf);
    out.up_demand[leaf] = up.demands.at(leaf).bits_per_sec();
  }
  for (ServiceId leaf : base_down_->leaves()) {
    out.down_alloc[leaf] = down.alloc.nodes.at(leaf);
    out.down_demand[leaf] = down.demands.at(leaf).bits_per_sec();
  }
  prev_up_ = out.up_alloc;
  prev_down_ = out.down_alloc;

  // Rack-wide per-service usage maxima for the fabric report.
  std::map<uint32_t, int64_t> rack_usage;
  for (const auto& [leaf, bps] : up_measured) {
    rack_usage[up_owner_.at(leaf).second] += bps;
  }
  for (const auto& [svc, bps] : rack_usage) {
    auto it = fabric_usage_max_.find(svc);
    if (it == fabric_usage_max_.end() || bps > it->second) fabric_usage_max_[svc] = bps;
  }

  // Local enforcement: rack share, further constrained by the machine trees.
  auto local_caps = [&](const PolicyTree& rack_tree,
                        const std::map<std::pair<uint32_t, uint32_t>, ServiceId>& leaf_of,
                        const std::map<ServiceId, NodeAllocation>& alloc,
                        const std::shared_ptr<const PolicyTree>& machine_tree,
                        const std::map<uint32_t, int64_t>& usage,
                        std::map<uint32_t, NodeAllocation>& prev_machine) {
    std::map<uint32_t, LocalCap> caps;
    // Rack slice for this machine.
    for (const auto& [key, leaf] : leaf_of) {
      if (key.first != machine_) continue;
      const NodeAllocation& a = alloc.at(leaf);
      int64_t cap = a.limited ? a.rate : effective_cap(rack_tree, leaf);
      caps[key.second] = {cap, a.limited};
    }
    // Machine-level constraint.
    if (machine_tree) {
      std::map<ServiceId, int64_t> measured;
      for (ServiceId leaf : machine_tree->leaves()) {
        auto it = usage.find(leaf);
        measured[leaf] = it == usage.end() ? 0 : it->second;
      }
      TreeRun m = run_tree(*machine_tree, measured, prev_machine);
      for (ServiceId leaf : machine_tree->leaves()) {
        const NodeAllocation& a = m.alloc.nodes.at(leaf);
        prev_machine[leaf] = a;
        int64_t cap = a.limited ? a.rate : effective_cap(*machine_tree, leaf);
        auto it = caps.find(leaf);
        if (it == caps.end()) {
          caps[leaf] = {cap, a.limited};
        } else if (cap < it->second.cap_bps) {
          it->second = {cap, a.limited || it->second.limited};
        } else if (a.limited) {
          it->second.limited = true;
        }
      }
    }
    return caps;
  };

  out.local_tx = local_caps(effective_up_, index_.up, out.up_alloc, machine_tx_,
                            tx_usage, prev_machine_tx_);
  out.local_rx = local_caps(*base_down_, index_.down, out.down_alloc, machine_rx_,
                            rx_usage, prev_machine_rx_);
  return out;
}

void RackBroker::apply_fabric_limits(const std::map<uint32_t, Bandwidth>& limits,
                                     SimTime now) {
  for (const auto& [svc, limit] : limits) {
    if (limit.is_unlimited()) {
      fabric_overrides_.erase(svc);
    } else {
      fabric_overrides_[svc] = limit;
    }
  }
  last_fabric_push_ = now;
  heard_fabric_ = true;
  rebuild_effective_up_tree();
}

bool RackBroker::fabric_watchdog(SimTime now) {
  if (!heard_fabric_ || fabric_overrides_.empty()) return false;
  if (now - last_fabric_push_ < cfg_.fabric_timeout_ns) return false;
  fabric_overrides_.clear();
  rebuild_effective_up_tree();
  return true;
}

uint32_t RackBroker::current_leader(SimTime now) const {
  uint32_t leader = machine_;
  for (const auto& [peer, stored] : peer_reports_) {
    if (now - stored.last_seen > cfg_.peer_timeout_ns) continue;
    leader = std::min(leader, peer);
  }
  return leader;
}

UsageReport RackBroker::collect_fabric_report(uint64_t now_us, uint32_t rack_id) {
  UsageReport report;
  report.sender = rack_id;
  report.timestamp_us = now_us;
  for (const auto& [svc, bps] : fabric_usage_max_) {
    report.entries.emplace_back(svc, wire_utilization(bps));
  }
  fabric_usage_max_.clear();
  return report;
}

}  // namespace bwbroker
