#include "bwbroker/sim/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "bwbroker/errors.hpp"

namespace bwbroker::sim {

namespace {

constexpr uint32_t kRootId = 0;
constexpr uint32_t kLeafBase = 100'000;

uint32_t leaf_id(uint32_t machine, size_t svc_index) {
  return kLeafBase + machine * 100 + static_cast<uint32_t>(svc_index);
}

}  // namespace

bool RunResult::all_passed() const {
  for (const AssertionResult& r : assertions) {
    if (!r.passed) return false;
  }
  return true;
}

Simulation::Simulation(ScenarioSpec spec) : spec_(std::move(spec)) {
  shaping_enabled_ = spec_.broker.enabled;
  traces_ = std::make_unique<TraceSet>(spec_.horizon_ns, spec_.service_names());
  build_topology();
  build_policies();
  build_hosts();
  build_brokers();
}

Simulation::~Simulation() = default;

void Simulation::build_topology() {
  const TopologySpec& t = spec_.topo;
  const int hosts = t.hosts();
  host_tx_.reserve(hosts);
  host_rx_.reserve(hosts);
  for (int h = 0; h < hosts; ++h) {
    host_tx_.push_back(std::make_unique<LinkQueue>("host" + std::to_string(h) + ".tx",
                                                   t.nic_bps, t.ecn_threshold_bytes,
                                                   t.queue_limit_bytes));
    host_rx_.push_back(std::make_unique<LinkQueue>("host" + std::to_string(h) + ".rx",
                                                   t.nic_bps, t.ecn_threshold_bytes,
                                                   t.queue_limit_bytes));
    host_tx_.back()->set_sink([this](Packet&& p) { on_host_tx_done(std::move(p)); });
    host_rx_.back()->set_sink([this](Packet&& p) { deliver(std::move(p)); });
  }
  rack_up_.resize(t.racks);
  rack_down_.resize(t.racks);
  up_cursor_.assign(t.racks, 0);
  down_cursor_.assign(t.racks, 0);
  up_sublink_bps_.assign(t.racks, t.rack_up_bps / std::max(1, t.up_sublinks));
  down_sublink_bps_.assign(t.racks, t.rack_down_bps / std::max(1, t.down_sublinks));
  up_acc_.resize(t.racks);
  down_acc_.resize(t.racks);
  for (int r = 0; r < t.racks; ++r) {
    for (int i = 0; i < std::max(1, t.up_sublinks); ++i) {
      auto link = std::make_unique<LinkQueue>(
          "rack" + std::to_string(r) + ".up." + std::to_string(i), up_sublink_bps_[r],
          t.ecn_threshold_bytes, t.queue_limit_bytes);
      link->set_sink([this](Packet&& p) { on_rack_up_done(std::move(p)); });
      rack_up_[r].push_back(std::move(link));
    }
    for (int i = 0; i < std::max(1, t.down_sublinks); ++i) {
      auto link = std::make_unique<LinkQueue>(
          "rack" + std::to_string(r) + ".down." + std::to_string(i), down_sublink_bps_[r],
          t.ecn_threshold_bytes, t.queue_limit_bytes);
      link->set_sink([this](Packet&& p) { on_rack_down_done(std::move(p)); });
      rack_down_[r].push_back(std::move(link));
    }
  }
}

void Simulation::build_policies() {
  for (const ServiceSpec& s : spec_.services) {
    if (s.id == kRootId || s.id >= kLeafBase) {
      throw ScenarioError("service ids must be nonzero and below 100000");
    }
  }

  // Service nodes default to (min 0, max unlimited, weight 1).
  auto tree_nodes = [&](const TreePolicySpec& policy) {
    std::vector<PolicyNode> nodes;
    PolicyNode root;
    root.id = kRootId;
    root.max_bw = policy.root_max;
    root.name = "root";
    nodes.push_back(root);
    for (const ServiceSpec& s : spec_.services) {
      PolicyNode n;
      n.id = s.id;
      n.parent = kRootId;
      n.name = s.name;
      for (const NodePolicySpec& np : policy.nodes) {
        if (spec_.service_id(np.service) == s.id) {
          n.min_bw = np.min_bw;
          n.max_bw = np.max_bw;
          n.weight = np.weight;
        }
      }
      nodes.push_back(n);
    }
    return nodes;
  };

  machine_tx_tree_ = std::make_shared<PolicyTree>(ContentionPoint::kMachineTx,
                                                  spec_.topo.nic_bps,
                                                  tree_nodes(spec_.machine_tx));
  machine_rx_tree_ = std::make_shared<PolicyTree>(ContentionPoint::kMachineRx,
                                                  spec_.topo.nic_bps,
                                                  tree_nodes(spec_.machine_rx));

  const int hpr = spec_.topo.hosts_per_rack;
  rack_up_tree_.resize(spec_.topo.racks);
  rack_down_tree_.resize(spec_.topo.racks);
  rack_leaf_index_.resize(spec_.topo.racks);
  for (int r = 0; r < spec_.topo.racks; ++r) {
    auto up_nodes = tree_nodes(spec_.rack_up);
    auto down_nodes = tree_nodes(spec_.rack_down);
    RackLeafIndex index;
    for (int h = 0; h < hpr; ++h) {
      const uint32_t machine = static_cast<uint32_t>(r * hpr + h);
      for (size_t si = 0; si < spec_.services.size(); ++si) {
        const ServiceSpec& svc = spec_.services[si];
        PolicyNode leaf;
        leaf.id = leaf_id(machine, si);
        leaf.parent = svc.id;
        leaf.name = svc.name + "@m" + std::to_string(machine);
        up_nodes.push_back(leaf);
        index.up[{machine, svc.id}] = leaf.id;
        PolicyNode down_leaf = leaf;
        down_leaf.id = leaf.id + 50;  // distinct id space for the rx tree
        down_nodes.push_back(down_leaf);
        index.down[{machine, svc.id}] = down_leaf.id;
      }
    }
    rack_up_tree_[r] = std::make_shared<PolicyTree>(ContentionPoint::kRackUp,
                                                    spec_.topo.rack_up_bps, up_nodes);
    rack_down_tree_[r] = std::make_shared<PolicyTree>(
        ContentionPoint::kRackDown, spec_.topo.rack_down_bps, down_nodes);
    rack_leaf_index_[r] = std::move(index);

    ValidationResult vr = validate_tree(*rack_up_tree_[r]);
    if (!vr.ok()) {
      throw ScenarioError("rack uplink policy invalid: " + vr.issues.front().detail);
    }
    vr = validate_tree(*rack_down_tree_[r]);
    if (!vr.ok()) {
      throw ScenarioError("rack downlink policy invalid: " + vr.issues.front().detail);
    }
  }
}

void Simulation::build_hosts() {
  const int hosts = spec_.topo.hosts();
  hosts_.resize(hosts);
  for (int h = 0; h < hosts; ++h) {
    HostState& host = hosts_[h];
    host.id = static_cast<uint32_t>(h);
    host.rack = h / spec_.topo.hosts_per_rack;
    for (const ServiceSpec& svc : spec_.services) {
      ServiceShaper shaper;
      shaper.static_tx_cap =
          std::min(effective_cap(*machine_tx_tree_, svc.id),
                   effective_cap(*rack_up_tree_[host.rack],
                                 rack_leaf_index_[host.rack].up_leaf(host.id, svc.id)));
      shaper.static_rx_cap =
          std::min(effective_cap(*machine_rx_tree_, svc.id),
                   effective_cap(*rack_down_tree_[host.rack],
                                 rack_leaf_index_[host.rack].down_leaf(host.id, svc.id)));

      LimiterConfig lim;
      lim.root_rate_bps = shaper.static_tx_cap;
      lim.root_burst_bytes = svc.limiter_burst_bytes > 0 ? svc.limiter_burst_bytes
                                                         : spec_.broker.limiter_burst_bytes;
      lim.root_burst_bytes = std::max<int64_t>(lim.root_burst_bytes, spec_.topo.mss_bytes);
      lim.child_burst_bytes =
          std::max<int64_t>(spec_.broker.child_burst_bytes, spec_.topo.mss_bytes);
      lim.sender_weight = svc.sender_weight;
      lim.stale_child_ttl_ns = 10 * spec_.broker.rack_interval_ns;
      lim.use_ewha = svc.ewha;
      shaper.tx = std::make_unique<RateLimiterTree>(lim, 0);

      MeterConfig meter;
      meter.capacity_bps = shaper.static_rx_cap;
      meter.line_rate_bps = spec_.topo.nic_bps;
      meter.min_rate_bps = spec_.broker.meter_min_rate_bps;
      meter.interval_ns = spec_.broker.meter_interval_ns;
      meter.alpha = spec_.broker.alpha;
      shaper.rx = std::make_unique<RateMeter>(meter);

      host.services.emplace(svc.id, std::move(shaper));
    }
  }
}

void Simulation::build_brokers() {
  const int hpr = spec_.topo.hosts_per_rack;
  agents_.resize(spec_.topo.hosts());
  RackBrokerConfig cfg;
  cfg.interval_ns = spec_.broker.rack_interval_ns;
  cfg.peer_timeout_ns = spec_.broker.rack_timeout_ns;
  cfg.fabric_timeout_ns = spec_.broker.fabric_timeout_ns;
  for (int h = 0; h < spec_.topo.hosts(); ++h) {
    const int rack = h / hpr;
    std::vector<uint32_t> machines;
    for (int m = rack * hpr; m < (rack + 1) * hpr; ++m) {
      machines.push_back(static_cast<uint32_t>(m));
    }
    auto broker = std::make_unique<RackBroker>(static_cast<uint32_t>(h), machines, cfg);
    broker->set_rack_trees(rack_up_tree_[rack], rack_down_tree_[rack],
                           rack_leaf_index_[rack]);
    broker->set_machine_trees(machine_tx_tree_, machine_rx_tree_);
    agents_[h].broker = std::move(broker);
  }

  FabricBrokerConfig fcfg;
  fcfg.interval_ns = spec_.broker.fabric_interval_ns;
  fcfg.report_timeout_ns = spec_.broker.fabric_timeout_ns;
  fabric_ = FabricBroker(fcfg);
  for (int r = 0; r < spec_.topo.racks; ++r) {
    fabric_.add_rack(static_cast<uint32_t>(r), spec_.topo.rack_up_bps);
  }
  for (const auto& [name, cap] : spec_.fabric_caps) {
    fabric_.set_service_cap(spec_.service_id(name), cap);
  }
}

SimTime Simulation::path_delay(uint32_t a, uint32_t b) const {
  if (a == b) return 0;
  const int hops = hosts_[a].rack == hosts_[b].rack ? 2 : 4;
  return hops * spec_.topo.prop_delay_ns;
}

// ---------------------------------------------------------------------------
// Routing

void Simulation::host_emit(uint32_t src, Packet&& p) {
  host_tx_[src]->enqueue(std::move(p), loop_);
}

void Simulation::on_host_tx_done(Packet&& p) {
  const int src_rack = hosts_[p.src].rack;
  const int dst_rack = hosts_[p.dst].rack;
  if (src_rack == dst_rack) {
    host_rx_[p.dst]->enqueue(std::move(p), loop_);
    return;
  }
  auto& group = rack_up_[src_rack];
  size_t& cur = up_cursor_[src_rack];
  // Ideal per-packet ECMP stand-in: round-robin over the uplink group.
  for (size_t i = 0; i < group.size(); ++i) {
    LinkQueue& link = *group[cur];
    cur = (cur + 1) % group.size();
    if (link.capacity() > 0) {
      link.enqueue(std::move(p), loop_);
      return;
    }
  }
  // Every uplink is down; the packet is lost.
}

void Simulation::on_rack_up_done(Packet&& p) {
  const int src_rack = hosts_[p.src].rack;
  const int dst_rack = hosts_[p.dst].rack;
  up_acc_[src_rack][p.service] += p.bytes;
  fabric_acc_[p.service] += p.bytes;
  auto& group = rack_down_[dst_rack];
  size_t& cur = down_cursor_[dst_rack];
  for (size_t i = 0; i < group.size(); ++i) {
    LinkQueue& link = *group[cur];
    cur = (cur + 1) % group.size();
    if (link.capacity() > 0) {
      link.enqueue(std::move(p), loop_);
      return;
    }
  }
}

void Simulation::on_rack_down_done(Packet&& p) {
  const int dst_rack = hosts_[p.dst].rack;
  down_acc_[dst_rack][p.service] += p.bytes;
  host_rx_[p.dst]->enqueue(std::move(p), loop_);
}

void Simulation::deliver(Packet&& p) {
  HostState& host = hosts_[p.dst];
  auto sit = host.services.find(p.service);
  if (sit == host.services.end()) return;
  ServiceShaper& shaper = sit->second;
  shaper.rx_bytes += p.bytes;

  if (shaping_enabled_) {
    std::vector<FeedbackPacket> fbs =
        shaper.rx->on_packet(p.src, p.service, p.bytes, p.ecn);
    // Feedback rides uncongested control headroom; it is applied directly
    // rather than as a separately simulated packet.
    for (FeedbackPacket& fb : fbs) {
      fb.meter_host = p.dst;
      HostState& sender = hosts_[fb.src_host];
      auto it = sender.services.find(fb.service);
      if (it != sender.services.end()) {
        it->second.tx->on_feedback(fb, loop_.now());
      }
    }
    if (!shaper.meter_active) {
      shaper.meter_active = true;
      shaper.meter_idle = 0;
      if (shaper.meter_dormant_since >= 0) {
        // The update timer was parked while no traffic arrived; apply the
        // growth those zero-utilization intervals would have produced.
        shaper.rx->idle_catchup((loop_.now() - shaper.meter_dormant_since) /
                                spec_.broker.meter_interval_ns);
        shaper.meter_dormant_since = -1;
      }
      const uint32_t hid = p.dst;
      const uint32_t svc = p.service;
      loop_.after(spec_.broker.meter_interval_ns, [this, hid, svc] { meter_tick(hid, svc); });
    }
  }

  if (p.flow == 0) return;
  auto cit = conns_.find(p.flow);
  if (cit == conns_.end()) return;
  FlowRx& rx = rx_flows_[p.flow];
  const int64_t prefix = rx.on_data(p.offset, p.bytes, p.ecn);
  const bool echo = rx.take_ecn_echo();

  auto bit = rpc_bounds_.find(p.flow);
  if (bit != rpc_bounds_.end()) {
    auto& dq = bit->second;
    while (!dq.empty() && dq.front().first <= prefix) {
      traces_->finish_flow(dq.front().second, loop_.now());
      dq.pop_front();
    }
  }

  Connection* conn = cit->second.get();
  loop_.after(2 * path_delay(p.src, p.dst) + kMicrosecond,
              [conn, prefix, echo] { conn->on_ack(prefix, echo); });
}

// ---------------------------------------------------------------------------
// Shaping

SendDecision Simulation::shaped_send(uint32_t src, uint32_t service, uint32_t dst,
                                     int32_t bytes, uint64_t flow, int64_t offset) {
  HostState& host = hosts_[src];
  auto sit = host.services.find(service);
  if (sit == host.services.end()) {
    throw ScenarioError("host has no shaper for service " + std::to_string(service));
  }
  if (shaping_enabled_) {
    SendDecision d = sit->second.tx->try_send(dst, bytes, loop_.now());
    if (!d.allowed()) return d;
  }
  sit->second.tx_bytes += bytes;
  Packet p;
  p.src = src;
  p.dst = dst;
  p.service = service;
  p.flow = flow;
  p.offset = offset;
  p.bytes = bytes;
  host_emit(src, std::move(p));
  return {SendVerdict::kAllowed, loop_.now()};
}

SendDecision Simulation::transport_send(Connection& conn, int64_t offset, int32_t bytes,
                                        bool /*retx*/) {
  SendDecision d = shaped_send(conn.src(), conn.service(), conn.dst(), bytes, conn.id(), offset);
  if (!d.allowed()) {
    // Poll bound: a limiter whose rate is about to be raised by feedback or
    // a broker tick must not strand the sender on a stale long wait.
    d.ready_at = std::min(d.ready_at, loop_.now() + 5 * kMillisecond);
  }
  return d;
}

void Simulation::meter_tick(uint32_t host, uint32_t service) {
  ServiceShaper& shaper = hosts_[host].services.at(service);
  const int64_t bytes = shaper.rx->interval_bytes();
  shaper.rx->update(spec_.broker.meter_interval_ns);
  if (bytes == 0) {
    if (++shaper.meter_idle >= 2) {
      shaper.meter_active = false;
      shaper.meter_dormant_since = loop_.now();
      return;
    }
  } else {
    shaper.meter_idle = 0;
  }
  loop_.after(spec_.broker.meter_interval_ns,
              [this, host, service] { meter_tick(host, service); });
}

void Simulation::install_local_policy(uint32_t machine, const BrokerOutput& out) {
  HostState& host = hosts_[machine];
  host.last_policy_install = loop_.now();
  for (auto& [svc, shaper] : host.services) {
    auto tx = out.local_tx.find(svc);
    if (tx != out.local_tx.end()) shaper.tx->set_root_rate(tx->second.cap_bps);
    auto rx = out.local_rx.find(svc);
    if (rx != out.local_rx.end()) shaper.rx->set_capacity(rx->second.cap_bps);
    shaper.tx->gc_stale_children(loop_.now());
  }
  // Shapers fall back to the static configuration if the broker goes silent.
  const SimTime installed = host.last_policy_install;
  loop_.after(spec_.broker.rack_timeout_ns, [this, machine, installed] {
    if (hosts_[machine].last_policy_install == installed) install_static_policy(machine);
  });
}

void Simulation::install_static_policy(uint32_t machine) {
  HostState& host = hosts_[machine];
  const bool had_dynamic = host.last_policy_install >= 0;
  host.last_policy_install = -1;
  for (auto& [svc, shaper] : host.services) {
    shaper.tx->set_root_rate(shaper.static_tx_cap);
    shaper.rx->set_capacity(shaper.static_rx_cap);
  }
  if (had_dynamic) {
    traces_->add_note(loop_.now(), "static_revert machine=" + std::to_string(machine));
  }
}

// ---------------------------------------------------------------------------
// Broker control plane

void Simulation::broker_report_tick(SimTime t) {
  const double interval = static_cast<double>(spec_.broker.rack_interval_ns);
  const int hpr = spec_.topo.hosts_per_rack;
  for (uint32_t m = 0; m < agents_.size(); ++m) {
    BrokerAgent& agent = agents_[m];
    if (!agent.alive) continue;
    HostState& host = hosts_[m];
    agent.pending_tx.clear();
    agent.pending_rx.clear();
    for (auto& [svc, shaper] : host.services) {
      agent.pending_tx[svc] = static_cast<int64_t>(
          std::llround(static_cast<double>(shaper.tx_bytes) * 8e9 / interval));
      agent.pending_rx[svc] = static_cast<int64_t>(
          std::llround(static_cast<double>(shaper.rx_bytes) * 8e9 / interval));
      shaper.tx_bytes = 0;
      shaper.rx_bytes = 0;
    }
    const UsageReport report = agent.broker->make_local_report(
        static_cast<uint64_t>(t / 1000), agent.pending_tx, agent.pending_rx);
    const int rack = host.rack;
    for (int peer = rack * hpr; peer < (rack + 1) * hpr; ++peer) {
      if (peer == static_cast<int>(m) || !agents_[peer].alive) continue;
      loop_.after(spec_.broker.control_delay_ns, [this, peer, report] {
        if (agents_[peer].alive) agents_[peer].broker->on_report(report, loop_.now());
      });
    }
  }
}

void Simulation::broker_alloc_tick(SimTime t) {
  for (uint32_t m = 0; m < agents_.size(); ++m) {
    BrokerAgent& agent = agents_[m];
    if (!agent.alive) continue;
    BrokerOutput out = agent.broker->tick(loop_.now(), agent.pending_tx, agent.pending_rx);
    install_local_policy(m, out);

    const int rack = hosts_[m].rack;
    const RackLeafIndex& index = rack_leaf_index_[rack];
    for (const auto& [svc, _] : hosts_[m].services) {
      const ServiceId up = index.up_leaf(m, svc);
      const ServiceId down = index.down_leaf(m, svc);
      traces_->add_alloc({t, m, 't', svc, out.up_demand.at(up), out.up_alloc.at(up).rate,
                          out.up_alloc.at(up).limited});
      traces_->add_alloc({t, m, 'r', svc, out.down_demand.at(down),
                          out.down_alloc.at(down).rate, out.down_alloc.at(down).limited});
    }
  }
}

void Simulation::fabric_report_tick(SimTime t) {
  for (uint32_t m = 0; m < agents_.size(); ++m) {
    BrokerAgent& agent = agents_[m];
    if (!agent.alive) continue;
    if (agent.broker->current_leader(loop_.now()) != m) continue;
    const int rack = hosts_[m].rack;
    rack_leader_[rack] = m;
    UsageReport report = agent.broker->collect_fabric_report(
        static_cast<uint64_t>(t / 1000), static_cast<uint32_t>(rack));
    if (!fabric_alive_) continue;
    loop_.after(spec_.broker.control_delay_ns, [this, report] {
      if (fabric_alive_) fabric_.on_rack_report(report, loop_.now());
    });
  }
}

void Simulation::fabric_alloc_tick(SimTime /*t*/) {
  if (!fabric_alive_) return;
  auto pushes = fabric_.tick(loop_.now());
  for (const auto& entry : pushes) {
    const int rack = static_cast<int>(entry.first);
    if (rack_leader_.find(rack) == rack_leader_.end()) continue;
    const std::map<uint32_t, Bandwidth> limits = entry.second;
    loop_.after(spec_.broker.control_delay_ns,
                [this, rack, limits] { deliver_fabric_push(rack, limits); });
  }
}

void Simulation::deliver_fabric_push(int rack, const std::map<uint32_t, Bandwidth>& limits) {
  // The leader applies the push and forwards it to its rack peers so every
  // broker water-fills against the same effective policy.
  const int hpr = spec_.topo.hosts_per_rack;
  for (int m = rack * hpr; m < (rack + 1) * hpr; ++m) {
    BrokerAgent& agent = agents_[m];
    if (!agent.alive) continue;
    agent.broker->apply_fabric_limits(limits, loop_.now());
    const uint32_t machine = static_cast<uint32_t>(m);
    loop_.after(spec_.broker.fabric_timeout_ns, [this, machine] {
      BrokerAgent& a = agents_[machine];
      if (!a.alive) return;
      if (a.broker->fabric_watchdog(loop_.now())) {
        traces_->add_note(loop_.now(), "fabric_revert machine=" + std::to_string(machine));
      }
    });
  }
}

// ---------------------------------------------------------------------------
// Workloads

std::vector<uint32_t> Simulation::workload_hosts(const std::vector<int>& racks,
                                                 int per_rack) const {
  std::vector<uint32_t> out;
  const int hpr = spec_.topo.hosts_per_rack;
  const int take = per_rack < 0 ? hpr : std::min(per_rack, hpr);
  for (int r : racks) {
    if (r < 0 || r >= spec_.topo.racks) throw ScenarioError("rack index out of range");
    for (int h = 0; h < take; ++h) out.push_back(static_cast<uint32_t>(r * hpr + h));
  }
  return out;
}

void Simulation::schedule_workloads() {
  for (size_t w = 0; w < spec_.workloads.size(); ++w) {
    const WorkloadSpec& ws = spec_.workloads[w];
    RunningWorkload run;
    run.spec = &ws;
    run.service = spec_.service_id(ws.service);
    run.rng = Rng(spec_.seed, 0x1000 + w);
    const SimTime stop = ws.stop_ns < 0 ? spec_.horizon_ns : ws.stop_ns;

    if (ws.kind == WorkloadKind::kOnOffUdp) {
      std::vector<uint32_t> sources = workload_hosts(
          ws.src_racks, ws.src_hosts_per_rack < 0 ? 1 : ws.src_hosts_per_rack);
      for (uint32_t src : sources) {
        OnOffSource s;
        s.workload = w;
        s.host = src;
        s.rng = Rng(spec_.seed, 0x9000 + (w << 16) + src);
        onoff_sources_.push_back(s);
        const size_t idx = onoff_sources_.size() - 1;
        // Random phase so the cluster's bursts interleave.
        const SimTime offset = static_cast<SimTime>(
            onoff_sources_[idx].rng.uniform(0, static_cast<double>(ws.on_ns + ws.off_ns)));
        loop_.at(ws.start_ns + offset, [this, idx] { onoff_begin_burst(idx); });
      }
      workloads_.push_back(std::move(run));
      continue;
    }

    std::vector<uint32_t> senders = workload_hosts(ws.src_racks, ws.src_hosts_per_rack);
    std::vector<uint32_t> receivers = workload_hosts(ws.dst_racks, ws.dst_hosts_per_rack);
    if (senders.empty() || receivers.empty()) {
      throw ScenarioError("workload needs nonempty sender and receiver sets");
    }
    if (ws.mapping == "mesh") {
      for (uint32_t s : senders) {
        for (uint32_t d : receivers) {
          if (s != d) run.pairs.emplace_back(s, d);
        }
      }
    } else {
      for (size_t i = 0; i < senders.size(); ++i) {
        run.pairs.emplace_back(senders[i], receivers[i % receivers.size()]);
      }
    }

    run.pair_conns.resize(run.pairs.size());
    run.next_conn.assign(run.pairs.size(), 0);
    for (size_t p = 0; p < run.pairs.size(); ++p) {
      for (int c = 0; c < ws.conns_per_pair; ++c) {
        const uint64_t id = next_conn_id_++;
        TransportParams params;
        params.mss_bytes = spec_.topo.mss_bytes;
        params.rto_ns = spec_.transport.rto_ns;
        params.init_cwnd_mss = spec_.transport.init_cwnd_mss;
        conns_.emplace(id, std::make_unique<Connection>(id, run.pairs[p].first,
                                                        run.pairs[p].second, run.service,
                                                        this, params));
        run.pair_conns[p].push_back(id);
      }
    }

    if (ws.kind == WorkloadKind::kLongLived) {
      // Connections come up spread over the ramp window.
      size_t total = 0;
      for (const auto& pc : run.pair_conns) total += pc.size();
      size_t k = 0;
      for (const auto& pc : run.pair_conns) {
        for (uint64_t id : pc) {
          const SimTime at =
              ws.start_ns + (total > 1 ? ws.ramp_ns * static_cast<SimTime>(k) /
                                             static_cast<SimTime>(total - 1)
                                       : 0);
          loop_.at(at, [this, id] { conns_.at(id)->set_unbounded(); });
          ++k;
        }
      }
      loop_.at(stop, [this, w] {
        for (const auto& pc : workloads_[w].pair_conns) {
          for (uint64_t id : pc) conns_.at(id)->stop();
        }
      });
    } else {  // rpc
      if (ws.rpc_bytes <= 0 || ws.offered_bps <= 0) {
        throw ScenarioError("rpc workloads need rpc_size and offered");
      }
      run.t_mu_ns =
          static_cast<double>(ws.rpc_bytes) * 8e9 / static_cast<double>(ws.offered_bps);
      loop_.at(ws.start_ns, [this, w] { rpc_arrival(w); });
    }
    workloads_.push_back(std::move(run));
  }
}

void Simulation::rpc_arrival(size_t widx) {
  RunningWorkload& run = workloads_[widx];
  const WorkloadSpec& ws = *run.spec;
  const SimTime stop = ws.stop_ns < 0 ? spec_.horizon_ns : ws.stop_ns;
  if (loop_.now() >= stop) return;

  const size_t p = run.next_pair++ % run.pairs.size();
  auto& conn_ids = run.pair_conns[p];
  const uint64_t conn_id = conn_ids[run.next_conn[p]++ % conn_ids.size()];
  Connection& conn = *conns_.at(conn_id);

  FlowRecord rec;
  rec.service = run.service;
  rec.src = conn.src();
  rec.dst = conn.dst();
  rec.bytes = ws.rpc_bytes;
  rec.start = loop_.now();
  const uint64_t rec_id = traces_->new_flow(rec);
  rpc_bounds_[conn_id].emplace_back(conn.stream_end() + ws.rpc_bytes, rec_id);
  conn.add_bytes(ws.rpc_bytes);

  const SimTime gap =
      static_cast<SimTime>(std::llround(run.rng.uniform(0.0, 2.0 * run.t_mu_ns)));
  loop_.after(std::max<SimTime>(gap, 1), [this, widx] { rpc_arrival(widx); });
}

void Simulation::onoff_begin_burst(size_t source_idx) {
  OnOffSource& src = onoff_sources_[source_idx];
  const WorkloadSpec& ws = *workloads_[src.workload].spec;
  const SimTime stop = ws.stop_ns < 0 ? spec_.horizon_ns : ws.stop_ns;
  if (loop_.now() >= stop) return;

  // A random destination rack other than our own; host 0 there receives.
  const int own_rack = hosts_[src.host].rack;
  int dst_rack = own_rack;
  if (spec_.topo.racks > 1) {
    dst_rack =
        static_cast<int>(src.rng.uniform_int(static_cast<uint32_t>(spec_.topo.racks - 1)));
    if (dst_rack >= own_rack) ++dst_rack;
  }
  src.dst = static_cast<uint32_t>(dst_rack * spec_.topo.hosts_per_rack);
  src.burst_end = loop_.now() + ws.on_ns;
  onoff_step(source_idx);
}

void Simulation::onoff_step(size_t source_idx) {
  OnOffSource& src = onoff_sources_[source_idx];
  const RunningWorkload& run = workloads_[src.workload];
  const WorkloadSpec& ws = *run.spec;
  if (loop_.now() >= src.burst_end) {
    loop_.after(ws.off_ns, [this, source_idx] { onoff_begin_burst(source_idx); });
    return;
  }
  const int32_t bytes = spec_.topo.mss_bytes;
  SendDecision d = shaped_send(src.host, run.service, src.dst, bytes, 0, 0);
  SimTime next;
  if (d.allowed()) {
    next = loop_.now() + static_cast<SimTime>(static_cast<double>(bytes) * 8e9 /
                                              static_cast<double>(ws.rate_bps));
  } else {
    next = std::min(d.ready_at, loop_.now() + 20 * kMillisecond);
  }
  loop_.at(next, [this, source_idx] { onoff_step(source_idx); });
}

// ---------------------------------------------------------------------------
// Events, flushing, run loop

Simulation::LinkTarget Simulation::resolve_link(const std::string& name) const {
  // Grammar: rackN.up[.i] / rackN.down[.i]; no index means the whole group.
  if (name.rfind("rack", 0) != 0) throw UnknownLinkError("unknown link '" + name + "'");
  const size_t dot = name.find('.');
  if (dot == std::string::npos || dot <= 4) {
    throw UnknownLinkError("unknown link '" + name + "'");
  }
  LinkTarget target;
  try {
    target.rack = std::stoi(name.substr(4, dot - 4));
  } catch (const std::exception&) {
    throw UnknownLinkError("unknown link '" + name + "'");
  }
  if (target.rack < 0 || target.rack >= spec_.topo.racks) {
    throw UnknownLinkError("unknown link '" + name + "'");
  }
  std::string rest = name.substr(dot + 1);
  const size_t dot2 = rest.find('.');
  const std::string dir = dot2 == std::string::npos ? rest : rest.substr(0, dot2);
  if (dir == "up") {
    target.up = true;
  } else if (dir == "down") {
    target.up = false;
  } else {
    throw UnknownLinkError("unknown link '" + name + "'");
  }
  if (dot2 != std::string::npos) {
    try {
      target.index = std::stoi(rest.substr(dot2 + 1));
    } catch (const std::exception&) {
      throw UnknownLinkError("unknown link '" + name + "'");
    }
  }
  const auto& group = target.up ? rack_up_[target.rack] : rack_down_[target.rack];
  if (target.index >= static_cast<int>(group.size())) {
    throw UnknownLinkError("unknown link '" + name + "'");
  }
  return target;
}

void Simulation::apply_link_event(const LinkTarget& target, bool link_up) {
  auto& group = target.up ? rack_up_[target.rack] : rack_down_[target.rack];
  const int64_t bps =
      target.up ? up_sublink_bps_[target.rack] : down_sublink_bps_[target.rack];
  for (int i = 0; i < static_cast<int>(group.size()); ++i) {
    if (target.index >= 0 && i != target.index) continue;
    group[i]->set_capacity(link_up ? bps : 0, loop_);
  }
}

void Simulation::schedule_events() {
  for (const EventSpec& e : spec_.events) {
    if (e.kind == "fabric_cap") {
      const uint32_t svc = spec_.service_id(e.service);
      const Bandwidth cap = e.cap;
      loop_.at(e.at_ns, [this, svc, cap] { fabric_.set_service_cap(svc, cap); });
    } else if (e.kind == "kill_rack_broker") {
      const uint32_t m = e.machine;
      if (m >= agents_.size()) throw ScenarioError("kill_rack_broker: no such machine");
      loop_.at(e.at_ns, [this, m] { agents_[m].alive = false; });
    } else if (e.kind == "kill_fabric_broker") {
      loop_.at(e.at_ns, [this] { fabric_alive_ = false; });
    } else if (e.kind == "link") {
      const LinkTarget target = resolve_link(e.link);  // validates eagerly
      const bool up = e.link_up;
      loop_.at(e.at_ns, [this, target, up] { apply_link_event(target, up); });
    } else {
      throw ScenarioError("unknown event kind '" + e.kind + "'");
    }
  }
}

void Simulation::flush_second(int64_t sec) {
  const SimTime bucket = (sec - 1) * kSecond;
  for (int r = 0; r < spec_.topo.racks; ++r) {
    for (auto& [svc, bytes] : up_acc_[r]) {
      if (bytes == 0) continue;
      traces_->add_util("rack" + std::to_string(r) + ".up", svc, bucket, bytes);
      bytes = 0;
    }
    for (auto& [svc, bytes] : down_acc_[r]) {
      if (bytes == 0) continue;
      traces_->add_util("rack" + std::to_string(r) + ".down", svc, bucket, bytes);
      bytes = 0;
    }
  }
  for (auto& [svc, bytes] : fabric_acc_) {
    if (bytes == 0) continue;
    traces_->add_util("fabric", svc, bucket, bytes);
    bytes = 0;
  }
  auto sample = [&](LinkQueue& link) {
    traces_->add_queue_sample(link.name(), bucket, link.backlog_bytes());
    traces_->add_queue_counts(link.name(), bucket, link.marks() - last_marks_[link.name()],
                              link.drops() - last_drops_[link.name()]);
    last_marks_[link.name()] = link.marks();
    last_drops_[link.name()] = link.drops();
  };
  for (auto& group : rack_up_) {
    for (auto& link : group) sample(*link);
  }
  for (auto& group : rack_down_) {
    for (auto& link : group) sample(*link);
  }
  for (auto& link : host_tx_) sample(*link);
  for (auto& link : host_rx_) sample(*link);
  if (sec * kSecond < spec_.horizon_ns) {
    loop_.at((sec + 1) * kSecond, [this, sec] { flush_second(sec + 1); });
  }
}

RunResult Simulation::run() {
  for (uint32_t m = 0; m < agents_.size(); ++m) install_static_policy(m);

  if (spec_.broker.enabled) {
    const SimTime d = spec_.broker.control_delay_ns;
    const SimTime t_rack = spec_.broker.rack_interval_ns;
    const SimTime t_fabric = spec_.broker.fabric_interval_ns;
    for (SimTime t = t_rack; t <= spec_.horizon_ns; t += t_rack) {
      loop_.at(t, [this, t] { broker_report_tick(t); });
      loop_.at(t + 2 * d, [this, t] { broker_alloc_tick(t); });
    }
    for (SimTime t = t_fabric; t <= spec_.horizon_ns; t += t_fabric) {
      loop_.at(t + 3 * d, [this, t] { fabric_report_tick(t); });
      loop_.at(t + 5 * d, [this, t] { fabric_alloc_tick(t); });
    }
  }

  schedule_workloads();
  schedule_events();
  loop_.at(kSecond, [this] { flush_second(1); });
  loop_.run_until(spec_.horizon_ns);
  flush_second(spec_.horizon_ns / kSecond + 1);

  RunResult result{std::move(*traces_), {}};
  result.assertions = evaluate_assertions(spec_, result.traces);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<AssertionResult> evaluate_assertions(const ScenarioSpec& spec,
                                                 const TraceSet& traces) {
  std::vector<AssertionResult> results;
  char buf[256];
  for (const AssertionSpec& a : spec.assertions) {
    AssertionResult r;
    r.label = a.label.empty() ? a.kind : a.label;
    const int64_t from_s = a.from_ns / kSecond;
    const int64_t to_s = (a.to_ns < 0 ? spec.horizon_ns : a.to_ns) / kSecond;
    if (a.kind == "util_mean") {
      const uint32_t svc = spec.service_id(a.service);
      r.observed = traces.util_mean_bps(a.scope, svc, from_s, to_s);
      r.passed = r.observed >= a.min_value && r.observed <= a.max_value;
      std::snprintf(buf, sizeof(buf), "%s %s mean %.3fMb/s over [%lld,%lld)s",
                    a.scope.c_str(), a.service.c_str(), r.observed / 1e6,
                    static_cast<long long>(from_s), static_cast<long long>(to_s));
      r.detail = buf;
    } else if (a.kind == "fct_p99") {
      const uint32_t svc = spec.service_id(a.service);
      const SimTime to = a.to_ns < 0 ? spec.horizon_ns : a.to_ns;
      r.observed = traces.fct_quantile_seconds(svc, 0.99, a.from_ns, to);
      r.passed = r.observed >= 0 && r.observed >= a.min_value && r.observed <= a.max_value;
      std::snprintf(buf, sizeof(buf), "%s p99 FCT %.3fms (%zu flows)", a.service.c_str(),
                    r.observed * 1e3, traces.finished_flows(svc, a.from_ns, to));
      r.detail = buf;
    } else if (a.kind == "jain") {
      std::vector<uint32_t> ids;
      for (const std::string& s : a.services) ids.push_back(spec.service_id(s));
      r.observed = traces.jain_index(a.scope, ids, from_s, to_s);
      r.passed = r.observed >= a.min_value && r.observed <= a.max_value;
      std::snprintf(buf, sizeof(buf), "jain %.4f at %s", r.observed, a.scope.c_str());
      r.detail = buf;
    } else if (a.kind == "fabric_revert_at") {
      r.passed = false;
      for (const auto& [t, note] : traces.notes()) {
        if (note.rfind("fabric_revert", 0) == 0 && std::llabs(t - a.at_ns) <= a.tolerance_ns) {
          r.passed = true;
          r.observed = static_cast<double>(t) / 1e9;
          break;
        }
      }
      std::snprintf(buf, sizeof(buf), "fabric revert near %.3fs: %s",
                    static_cast<double>(a.at_ns) / 1e9, r.passed ? "found" : "missing");
      r.detail = buf;
    } else if (a.kind == "flows_done") {
      const uint32_t svc = spec.service_id(a.service);
      const SimTime to = a.to_ns < 0 ? spec.horizon_ns : a.to_ns;
      r.observed = static_cast<double>(traces.finished_flows(svc, a.from_ns, to));
      r.passed = r.observed >= a.min_value && r.observed <= a.max_value;
      std::snprintf(buf, sizeof(buf), "%s finished %.0f flows", a.service.c_str(), r.observed);
      r.detail = buf;
    } else {
      r.passed = false;
      r.detail = "unknown assertion kind '" + a.kind + "'";
    }
    results.push_back(std::move(r));
  }
  return results;
}

RunResult run_scenario(const ScenarioSpec& spec) {
  Simulation sim(spec);
  return sim.run();
}

}  // namespace bwbroker::sim
