#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "bwbroker/allocator.hpp"
#include "bwbroker/policy.hpp"
#include "bwbroker/units.hpp"
#include "bwbroker/wire.hpp"

namespace bwbroker {

struct RackBrokerConfig {
  SimTime interval_ns = 1 * kSecond;        // T_rack
  SimTime peer_timeout_ns = 5 * kSecond;    // T^t_rack
  SimTime fabric_timeout_ns = 50 * kSecond; // T^t_fabric (rack side)
};

// Maps the rack trees' (machine, service) leaves to their owners. Leaf ids
// are unique across the uplink and downlink trees so one usage report can
// carry both directions.
struct RackLeafIndex {
  // (machine, service) -> leaf id, per direction.
  std::map<std::pair<uint32_t, uint32_t>, ServiceId> up;
  std::map<std::pair<uint32_t, uint32_t>, ServiceId> down;

  ServiceId up_leaf(uint32_t machine, uint32_t service) const;
  ServiceId down_leaf(uint32_t machine, uint32_t service) const;
};

struct LocalCap {
  int64_t cap_bps = 0;
  bool limited = false;
};

// One broker tick's результат: the full rack allocation (identical on every
// machine that saw the same reports) plus the caps this machine enforces.
struct BrokerOutput {
  std::map<ServiceId, NodeAllocation> up_alloc;
  std::map<ServiceId, NodeAllocation> down_alloc;
  std::map<ServiceId, int64_t> up_demand;
  std::map<ServiceId, int64_t> down_demand;
  // Enforceable caps for the local machine, keyed by service id.
  std::map<uint32_t, LocalCap> local_tx;
  std::map<uint32_t, LocalCap> local_rx;
};

// Distributed per-rack control loop, one instance per machine. Every
// interval each machine broadcasts its (machine,service) usage, folds in
// peers' reports, water-fills the rack policy, and enforces its own slice.
class RackBroker {
 public:
  RackBroker(uint32_t machine, std::vector<uint32_t> rack_machines,
             RackBrokerConfig cfg = {});

  void set_rack_trees(std::shared_ptr<const PolicyTree> up,
                      std::shared_ptr<const PolicyTree> down, RackLeafIndex index);
  // Machine-level trees whose leaves are service ids; the most constrained
  // of machine and rack policy wins.
  void set_machine_trees(std::shared_ptr<const PolicyTree> tx,
                         std::shared_ptr<const PolicyTree> rx);

  uint32_t machine() const { return machine_; }
  const RackBrokerConfig& config() const { return cfg_; }

  // The report this machine unicasts to its rack peers. Usage maps are keyed
  // by service id in bits/s; entries come out keyed by leaf id, ascending.
  UsageReport make_local_report(uint64_t now_us,
                                const std::map<uint32_t, int64_t>& tx_usage,
                                const std::map<uint32_t, int64_t>& rx_usage) const;

  // Stores a peer report; older timestamps than the stored one are dropped.
  // Throws UnknownMachineError for senders outside the rack.
  void on_report(const UsageReport& report, SimTime now);

  // Runs the two-pass allocation over own + non-stale peer usage and returns
  // the new runtime policy. Also refreshes the rack-usage maxima reported to
  // the fabric broker.
  BrokerOutput tick(SimTime now, const std::map<uint32_t, int64_t>& tx_usage,
                    const std::map<uint32_t, int64_t>& rx_usage);

  // Fabric-push handling (applies to the uplink tree's service nodes).
  // An unlimited entry clears the service's override.
  void apply_fabric_limits(const std::map<uint32_t, Bandwidth>& limits, SimTime now);
  bool has_fabric_limit(uint32_t service) const { return fabric_overrides_.count(service) != 0; }
  // Reverts to the static policy when the fabric broker has been silent for
  // T^t_fabric. Returns true when a revert happened at this call.
  bool fabric_watchdog(SimTime now);

  // Lowest machine id among the machines heard from recently (self counts).
  uint32_t current_leader(SimTime now) const;

  // Leader duty: (service -> max over the fabric interval of per-tick rack
  // usage). Collecting resets the maxima.
  UsageReport collect_fabric_report(uint64_t now_us, uint32_t rack_id);

 private:
  struct StoredReport {
    UsageReport report;
    SimTime last_seen = 0;
  };

  void rebuild_effective_up_tree();
  int64_t leaf_usage(ServiceId leaf, uint32_t owner, uint32_t service,
                     const std::map<uint32_t, int64_t>& local_usage, bool is_up,
                     SimTime now) const;

  uint32_t machine_;
  std::vector<uint32_t> rack_machines_;
  RackBrokerConfig cfg_;

  std::shared_ptr<const PolicyTree> base_up_;
  std::shared_ptr<const PolicyTree> base_down_;
  PolicyTree effective_up_;  // base_up_ with fabric overrides folded in
  RackLeafIndex index_;
  std::map<ServiceId, std::pair<uint32_t, uint32_t>> up_owner_;    // leaf -> (machine, svc)
  std::map<ServiceId, std::pair<uint32_t, uint32_t>> down_owner_;

  std::shared_ptr<const PolicyTree> machine_tx_;
  std::shared_ptr<const PolicyTree> machine_rx_;

  std::map<uint32_t, StoredReport> peer_reports_;
  std::map<ServiceId, NodeAllocation> prev_up_;
  std::map<ServiceId, NodeAllocation> prev_down_;
  std::map<uint32_t, NodeAllocation> prev_machine_tx_;
  std::map<uint32_t, NodeAllocation> prev_machine_rx_;

  std::map<uint32_t, Bandwidth> fabric_overrides_;
  SimTime last_fabric_push_ = 0;
  bool heard_fabric_ = false;

  std::map<uint32_t, int64_t> fabric_usage_max_;
};

}  // namespace bwbroker
