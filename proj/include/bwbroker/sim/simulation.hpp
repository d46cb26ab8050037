#pragma once

#include <deque>
#include <map>
#include <memory>
#include <vector>

#include "bwbroker/fabric_broker.hpp"
#include "bwbroker/rack_broker.hpp"
#include "bwbroker/shaper.hpp"
#include "bwbroker/sim/event_loop.hpp"
#include "bwbroker/sim/link.hpp"
#include "bwbroker/sim/rng.hpp"
#include "bwbroker/sim/scenario.hpp"
#include "bwbroker/sim/traces.hpp"
#include "bwbroker/sim/transport.hpp"

namespace bwbroker::sim {

struct AssertionResult {
  std::string label;
  bool passed = false;
  double observed = 0;
  std::string detail;
};

struct RunResult {
  TraceSet traces;
  std::vector<AssertionResult> assertions;
  bool all_passed() const;
};

// Evaluates a scenario's embedded assertions against a finished trace set.
std::vector<AssertionResult> evaluate_assertions(const ScenarioSpec& spec,
                                                 const TraceSet& traces);

// One deterministic run: hosts with shapers, rack/fabric brokers, FIFO+ECN
// links, the simplified transport, and the scenario's workloads and events.
class Simulation : public TransportHooks {
 public:
  explicit Simulation(ScenarioSpec spec);
  ~Simulation() override;

  RunResult run();

  // TransportHooks
  SimTime transport_now() const override { return loop_.now(); }
  void transport_schedule(SimTime at, std::function<void()> fn) override {
    loop_.at(at, std::move(fn));
  }
  SendDecision transport_send(Connection& conn, int64_t offset, int32_t bytes,
                              bool retx) override;

 private:
  struct ServiceShaper {
    std::unique_ptr<RateLimiterTree> tx;
    std::unique_ptr<RateMeter> rx;
    bool meter_active = false;
    int meter_idle = 0;
    SimTime meter_dormant_since = -1;
    int64_t tx_bytes = 0;  // since the last broker report
    int64_t rx_bytes = 0;
    int64_t static_tx_cap = 0;
    int64_t static_rx_cap = 0;
  };

  struct HostState {
    uint32_t id = 0;
    int rack = 0;
    std::map<uint32_t, ServiceShaper> services;
    SimTime last_policy_install = -1;
  };

  struct BrokerAgent {
    std::unique_ptr<RackBroker> broker;
    bool alive = true;
    std::map<uint32_t, int64_t> pending_tx;  // usage captured at report time
    std::map<uint32_t, int64_t> pending_rx;
  };

  struct OnOffSource {
    size_t workload = 0;
    uint32_t host = 0;
    uint32_t dst = 0;
    SimTime burst_end = 0;
    Rng rng;
  };

  struct RunningWorkload {
    const WorkloadSpec* spec = nullptr;
    uint32_t service = 0;
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    std::vector<std::vector<uint64_t>> pair_conns;
    size_t next_pair = 0;
    std::vector<size_t> next_conn;
    double t_mu_ns = 0;
    Rng rng;
  };

  // Construction
  void build_topology();
  void build_policies();
  void build_hosts();
  void build_brokers();
  void schedule_workloads();
  void schedule_events();
  void schedule_flush();

  // Routing
  void host_emit(uint32_t src, Packet&& p);
  void on_host_tx_done(Packet&& p);
  void on_rack_up_done(Packet&& p);
  void on_rack_down_done(Packet&& p);
  void deliver(Packet&& p);
  SimTime path_delay(uint32_t a, uint32_t b) const;

  // Shaping
  SendDecision shaped_send(uint32_t src, uint32_t service, uint32_t dst, int32_t bytes,
                           uint64_t flow, int64_t offset);
  void meter_tick(uint32_t host, uint32_t service);
  void install_local_policy(uint32_t machine, const BrokerOutput& out);
  void install_static_policy(uint32_t machine);

  // Brokers
  void broker_report_tick(SimTime t);
  void broker_alloc_tick(SimTime t);
  void fabric_report_tick(SimTime t);
  void fabric_alloc_tick(SimTime t);
  void deliver_fabric_push(int rack, const std::map<uint32_t, Bandwidth>& limits);

  // Workloads
  void rpc_arrival(size_t widx);
  void onoff_begin_burst(size_t source_idx);
  void onoff_step(size_t source_idx);
  void flush_second(int64_t sec);

  struct LinkTarget {
    int rack = 0;
    bool up = true;
    int index = -1;  // -1: whole group
  };
  LinkTarget resolve_link(const std::string& name) const;
  void apply_link_event(const LinkTarget& target, bool link_up);
  std::vector<uint32_t> workload_hosts(const std::vector<int>& racks, int per_rack) const;

  ScenarioSpec spec_;
  EventLoop loop_;
  std::unique_ptr<TraceSet> traces_;

  // Topology: per-host NIC queues and per-rack sublink groups.
  std::vector<std::unique_ptr<LinkQueue>> host_tx_;
  std::vector<std::unique_ptr<LinkQueue>> host_rx_;
  std::vector<std::vector<std::unique_ptr<LinkQueue>>> rack_up_;
  std::vector<std::vector<std::unique_ptr<LinkQueue>>> rack_down_;
  std::vector<size_t> up_cursor_;
  std::vector<size_t> down_cursor_;
  std::vector<int64_t> up_sublink_bps_;
  std::vector<int64_t> down_sublink_bps_;

  // Per-rack, per-service delivered-byte counters for utilization traces,
  // flushed once per simulated second.
  std::vector<std::map<uint32_t, int64_t>> up_acc_;
  std::vector<std::map<uint32_t, int64_t>> down_acc_;
  std::map<uint32_t, int64_t> fabric_acc_;
  std::map<std::string, int64_t> last_marks_;
  std::map<std::string, int64_t> last_drops_;

  std::vector<HostState> hosts_;
  std::vector<BrokerAgent> agents_;
  FabricBroker fabric_;
  bool fabric_alive_ = true;
  std::map<int, uint32_t> rack_leader_;  // last machine that reported per rack

  std::shared_ptr<const PolicyTree> machine_tx_tree_;
  std::shared_ptr<const PolicyTree> machine_rx_tree_;
  std::vector<std::shared_ptr<const PolicyTree>> rack_up_tree_;
  std::vector<std::shared_ptr<const PolicyTree>> rack_down_tree_;
  std::vector<RackLeafIndex> rack_leaf_index_;

  std::map<uint64_t, std::unique_ptr<Connection>> conns_;
  std::map<uint64_t, FlowRx> rx_flows_;
  std::map<uint64_t, std::deque<std::pair<int64_t, uint64_t>>> rpc_bounds_;
  uint64_t next_conn_id_ = 1;

  std::vector<RunningWorkload> workloads_;
  std::vector<OnOffSource> onoff_sources_;

  bool shaping_enabled_ = true;
};

// Loads, runs, and (optionally) writes CSVs; the returned assertions decide
// the CLI exit code.
RunResult run_scenario(const ScenarioSpec& spec);

}  // namespace bwbroker::sim
