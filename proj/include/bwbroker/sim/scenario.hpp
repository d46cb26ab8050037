#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bwbroker/policy.hpp"
#include "bwbroker/units.hpp"

namespace bwbroker::sim {

struct TopologySpec {
  int racks = 9;
  int hosts_per_rack = 10;
  int64_t nic_bps = 10'000'000'000;
  int64_t rack_up_bps = 80'000'000'000;    // aggregate
  int64_t rack_down_bps = 80'000'000'000;  // aggregate
  int up_sublinks = 1;
  int down_sublinks = 1;
  int64_t ecn_threshold_bytes = 80'000;
  int64_t queue_limit_bytes = 1'000'000;
  int mss_bytes = 1500;
  SimTime prop_delay_ns = 10 * kMicrosecond;

  int hosts() const { return racks * hosts_per_rack; }
};

struct ServiceSpec {
  uint32_t id = 0;
  std::string name;
  double sender_weight = 1.0;
  int64_t limiter_burst_bytes = -1;  // -1: broker default
  bool ewha = false;  // share one limiter across destinations (EWHA feedback)
};

// Per-service policy parameters for one tree (machine- or rack-level).
struct NodePolicySpec {
  std::string service;
  Bandwidth min_bw = Bandwidth::bps(0);
  Bandwidth max_bw = Bandwidth::unlimited();
  double weight = 1.0;
};

struct TreePolicySpec {
  Bandwidth root_max = Bandwidth::unlimited();
  std::vector<NodePolicySpec> nodes;  // services not listed default to (0, unl, 1)
};

struct BrokerSpec {
  bool enabled = true;
  SimTime rack_interval_ns = 1 * kSecond;
  SimTime fabric_interval_ns = 10 * kSecond;
  SimTime rack_timeout_ns = 5 * kSecond;
  SimTime fabric_timeout_ns = 50 * kSecond;
  SimTime meter_interval_ns = 200 * kMicrosecond;
  double alpha = 0.5;
  int64_t meter_min_rate_bps = 1'000'000;
  int64_t limiter_burst_bytes = 65'536;
  int64_t child_burst_bytes = 65'536;
  SimTime control_delay_ns = 100 * kMicrosecond;
};

struct TransportSpec {
  SimTime rto_ns = 200 * kMillisecond;
  int init_cwnd_mss = 2;
};

enum class WorkloadKind { kLongLived, kRpc, kOnOffUdp };

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kLongLived;
  std::string service;
  std::vector<int> src_racks;
  std::vector<int> dst_racks;
  int src_hosts_per_rack = -1;  // -1 = all hosts of each src rack
  int dst_hosts_per_rack = -1;
  // one_to_one: sender i talks to receiver i mod |receivers|; mesh: every
  // sender talks to every receiver.
  std::string mapping = "one_to_one";
  int conns_per_pair = 1;
  int64_t rpc_bytes = 0;
  int64_t offered_bps = 0;  // rpc workloads: aggregate target load
  int64_t rate_bps = 0;     // onoff: per-source burst rate
  SimTime on_ns = 5 * kSecond;
  SimTime off_ns = 2 * kSecond;
  SimTime start_ns = 0;
  SimTime stop_ns = -1;  // -1: horizon
  SimTime ramp_ns = 0;   // long-lived: connections start spread over this window
};

struct EventSpec {
  SimTime at_ns = 0;
  std::string kind;  // fabric_cap | kill_rack_broker | kill_fabric_broker | link
  std::string service;
  Bandwidth cap = Bandwidth::unlimited();
  uint32_t machine = 0;
  std::string link;
  bool link_up = false;
};

struct AssertionSpec {
  std::string kind;  // util_mean | fct_p99 | jain | fabric_revert_at | flows_done
  std::string scope;
  std::string service;
  std::vector<std::string> services;
  SimTime from_ns = 0;
  SimTime to_ns = -1;
  double min_value = -1e300;  // unit depends on kind (bits/s, seconds, index)
  double max_value = 1e300;
  SimTime at_ns = 0;
  SimTime tolerance_ns = kSecond;
  std::string label;
};

struct ScenarioSpec {
  std::string name;
  SimTime horizon_ns = 10 * kSecond;
  uint64_t seed = 1;
  TopologySpec topo;
  std::vector<ServiceSpec> services;
  TreePolicySpec machine_tx;
  TreePolicySpec machine_rx;
  TreePolicySpec rack_up;
  TreePolicySpec rack_down;
  std::map<std::string, Bandwidth> fabric_caps;
  BrokerSpec broker;
  TransportSpec transport;
  std::vector<WorkloadSpec> workloads;
  std::vector<EventSpec> events;
  std::vector<AssertionSpec> assertions;

  uint32_t service_id(const std::string& name) const;
  const ServiceSpec& service(uint32_t id) const;
  std::map<uint32_t, std::string> service_names() const;
};

// Parses and sanity-checks a scenario document. Throws ScenarioError with a
// diagnostic on schema problems or dangling service references.
ScenarioSpec scenario_from_json_text(const std::string& text);
ScenarioSpec scenario_from_json_file(const std::string& path);

}  // namespace bwbroker::sim
