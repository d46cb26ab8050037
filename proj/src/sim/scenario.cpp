#include "bwbroker/sim/scenario.hpp"

#include <fstream>
#include <sstream>

#include "bwbroker/errors.hpp"
#include "json.hpp"

namespace bwbroker::sim {

using nlohmann::json;

namespace {

Bandwidth bw_field(const json& v) {
  if (v.is_string()) return parse_bandwidth(v.get<std::string>());
  if (v.is_number()) return Bandwidth::bps(v.get<int64_t>());
  throw ScenarioError("bandwidth field must be a string or number");
}

int64_t bytes_field(const json& v) {
  if (v.is_string()) return parse_bytes(v.get<std::string>());
  if (v.is_number()) return v.get<int64_t>();
  throw ScenarioError("byte-size field must be a string or number");
}

SimTime time_field(const json& v) {
  if (v.is_string()) return parse_duration(v.get<std::string>());
  if (v.is_number()) return static_cast<SimTime>(v.get<double>() * 1e9);
  throw ScenarioError("duration field must be a string or number");
}

template <typename T, typename F>
void maybe(const json& j, const char* key, T& out, F convert) {
  if (j.contains(key)) out = convert(j.at(key));
}

void parse_tree_policy(const json& j, TreePolicySpec& out) {
  maybe(j, "root_max", out.root_max, bw_field);
  if (!j.contains("nodes")) return;
  for (const auto& jn : j.at("nodes")) {
    NodePolicySpec n;
    n.service = jn.at("service").get<std::string>();
    maybe(jn, "min", n.min_bw, bw_field);
    maybe(jn, "max", n.max_bw, bw_field);
    maybe(jn, "weight", n.weight, [](const json& v) { return v.get<double>(); });
    out.nodes.push_back(std::move(n));
  }
}

std::vector<int> rack_list(const json& v, int racks) {
  std::vector<int> out;
  if (v.is_string() && v.get<std::string>() == "all") {
    for (int r = 0; r < racks; ++r) out.push_back(r);
    return out;
  }
  for (const auto& e : v) out.push_back(e.get<int>());
  return out;
}

}  // namespace

uint32_t ScenarioSpec::service_id(const std::string& name) const {
  for (const ServiceSpec& s : services) {
    if (s.name == name) return s.id;
  }
  throw ScenarioError("unknown service '" + name + "'");
}

const ServiceSpec& ScenarioSpec::service(uint32_t id) const {
  for (const ServiceSpec& s : services) {
    if (s.id == id) return s;
  }
  throw ScenarioError("unknown service id " + std::to_string(id));
}

std::map<uint32_t, std::string> ScenarioSpec::service_names() const {
  std::map<uint32_t, std::string> out;
  for (const ServiceSpec& s : services) out[s.id] = s.name;
  return out;
}

ScenarioSpec scenario_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario JSON parse error: ") + e.what());
  }

  ScenarioSpec spec;
  try {
    maybe(doc, "name", spec.name, [](const json& v) { return v.get<std::string>(); });
    spec.horizon_ns = time_field(doc.at("horizon"));
    maybe(doc, "seed", spec.seed, [](const json& v) { return v.get<uint64_t>(); });

    if (doc.contains("topology")) {
      const json& t = doc.at("topology");
      maybe(t, "racks", spec.topo.racks, [](const json& v) { return v.get<int>(); });
      maybe(t, "hosts_per_rack", spec.topo.hosts_per_rack,
            [](const json& v) { return v.get<int>(); });
      maybe(t, "nic", spec.topo.nic_bps, [](const json& v) { return bw_field(v).bits_per_sec(); });
      maybe(t, "rack_up", spec.topo.rack_up_bps,
            [](const json& v) { return bw_field(v).bits_per_sec(); });
      maybe(t, "rack_down", spec.topo.rack_down_bps,
            [](const json& v) { return bw_field(v).bits_per_sec(); });
      maybe(t, "up_sublinks", spec.topo.up_sublinks, [](const json& v) { return v.get<int>(); });
      maybe(t, "down_sublinks", spec.topo.down_sublinks,
            [](const json& v) { return v.get<int>(); });
      maybe(t, "ecn_threshold", spec.topo.ecn_threshold_bytes, bytes_field);
      maybe(t, "queue_limit", spec.topo.queue_limit_bytes, bytes_field);
      maybe(t, "mss", spec.topo.mss_bytes, [](const json& v) { return v.get<int>(); });
      maybe(t, "prop_delay", spec.topo.prop_delay_ns, time_field);
    }

    if (!doc.contains("services")) throw ScenarioError("scenario needs a services list");
    uint32_t next_id = 1;
    for (const auto& js : doc.at("services")) {
      ServiceSpec s;
      s.name = js.at("name").get<std::string>();
      s.id = js.contains("id") ? js.at("id").get<uint32_t>() : next_id;
      next_id = std::max(next_id, s.id + 1);
      maybe(js, "sender_weight", s.sender_weight,
            [](const json& v) { return v.get<double>(); });
      maybe(js, "limiter_burst", s.limiter_burst_bytes, bytes_field);
      maybe(js, "ewha", s.ewha, [](const json& v) { return v.get<bool>(); });
      spec.services.push_back(std::move(s));
    }

    if (doc.contains("machine_policy")) {
      const json& m = doc.at("machine_policy");
      if (m.contains("tx")) parse_tree_policy(m.at("tx"), spec.machine_tx);
      if (m.contains("rx")) parse_tree_policy(m.at("rx"), spec.machine_rx);
    }
    if (doc.contains("rack_policy")) {
      const json& r = doc.at("rack_policy");
      if (r.contains("up")) parse_tree_policy(r.at("up"), spec.rack_up);
      if (r.contains("down")) parse_tree_policy(r.at("down"), spec.rack_down);
    }
    if (doc.contains("fabric_policy") && doc.at("fabric_policy").contains("caps")) {
      for (const auto& [name, v] : doc.at("fabric_policy").at("caps").items()) {
        spec.fabric_caps[name] = bw_field(v);
      }
    }

    if (doc.contains("broker")) {
      const json& b = doc.at("broker");
      maybe(b, "enabled", spec.broker.enabled, [](const json& v) { return v.get<bool>(); });
      maybe(b, "rack_interval", spec.broker.rack_interval_ns, time_field);
      maybe(b, "fabric_interval", spec.broker.fabric_interval_ns, time_field);
      maybe(b, "rack_timeout", spec.broker.rack_timeout_ns, time_field);
      maybe(b, "fabric_timeout", spec.broker.fabric_timeout_ns, time_field);
      maybe(b, "meter_interval", spec.broker.meter_interval_ns, time_field);
      maybe(b, "alpha", spec.broker.alpha, [](const json& v) { return v.get<double>(); });
      maybe(b, "meter_min_rate", spec.broker.meter_min_rate_bps,
            [](const json& v) { return bw_field(v).bits_per_sec(); });
      maybe(b, "limiter_burst", spec.broker.limiter_burst_bytes, bytes_field);
      maybe(b, "child_burst", spec.broker.child_burst_bytes, bytes_field);
      maybe(b, "control_delay", spec.broker.control_delay_ns, time_field);
    }
    if (doc.contains("transport")) {
      const json& t = doc.at("transport");
      maybe(t, "rto", spec.transport.rto_ns, time_field);
      maybe(t, "init_cwnd_mss", spec.transport.init_cwnd_mss,
            [](const json& v) { return v.get<int>(); });
    }

    if (doc.contains("workloads")) {
      for (const auto& jw : doc.at("workloads")) {
        WorkloadSpec w;
        const std::string kind = jw.at("type").get<std::string>();
        if (kind == "long_lived") {
          w.kind = WorkloadKind::kLongLived;
        } else if (kind == "rpc") {
          w.kind = WorkloadKind::kRpc;
        } else if (kind == "onoff_udp") {
          w.kind = WorkloadKind::kOnOffUdp;
        } else {
          throw ScenarioError("unknown workload type '" + kind + "'");
        }
        w.service = jw.at("service").get<std::string>();
        if (jw.contains("src_racks")) w.src_racks = rack_list(jw.at("src_racks"), spec.topo.racks);
        if (jw.contains("dst_racks")) w.dst_racks = rack_list(jw.at("dst_racks"), spec.topo.racks);
        maybe(jw, "src_hosts_per_rack", w.src_hosts_per_rack,
              [](const json& v) { return v.get<int>(); });
        maybe(jw, "dst_hosts_per_rack", w.dst_hosts_per_rack,
              [](const json& v) { return v.get<int>(); });
        maybe(jw, "mapping", w.mapping, [](const json& v) { return v.get<std::string>(); });
        maybe(jw, "conns_per_pair", w.conns_per_pair, [](const json& v) { return v.get<int>(); });
        maybe(jw, "rpc_size", w.rpc_bytes, bytes_field);
        maybe(jw, "offered", w.offered_bps,
              [](const json& v) { return bw_field(v).bits_per_sec(); });
        maybe(jw, "rate", w.rate_bps, [](const json& v) { return bw_field(v).bits_per_sec(); });
        maybe(jw, "on", w.on_ns, time_field);
        maybe(jw, "off", w.off_ns, time_field);
        maybe(jw, "start", w.start_ns, time_field);
        maybe(jw, "stop", w.stop_ns, time_field);
        maybe(jw, "ramp", w.ramp_ns, time_field);
        spec.workloads.push_back(std::move(w));
      }
    }

    if (doc.contains("events")) {
      for (const auto& je : doc.at("events")) {
        EventSpec e;
        e.at_ns = time_field(je.at("at"));
        e.kind = je.at("kind").get<std::string>();
        maybe(je, "service", e.service, [](const json& v) { return v.get<std::string>(); });
        maybe(je, "cap", e.cap, bw_field);
        maybe(je, "machine", e.machine, [](const json& v) { return v.get<uint32_t>(); });
        maybe(je, "link", e.link, [](const json& v) { return v.get<std::string>(); });
        if (je.contains("state")) e.link_up = je.at("state").get<std::string>() == "up";
        spec.events.push_back(std::move(e));
      }
    }

    if (doc.contains("assertions")) {
      for (const auto& ja : doc.at("assertions")) {
        AssertionSpec a;
        a.kind = ja.at("kind").get<std::string>();
        maybe(ja, "scope", a.scope, [](const json& v) { return v.get<std::string>(); });
        maybe(ja, "service", a.service, [](const json& v) { return v.get<std::string>(); });
        if (ja.contains("services")) {
          for (const auto& s : ja.at("services")) a.services.push_back(s.get<std::string>());
        }
        maybe(ja, "from", a.from_ns, time_field);
        maybe(ja, "to", a.to_ns, time_field);
        maybe(ja, "at", a.at_ns, time_field);
        maybe(ja, "tolerance", a.tolerance_ns, time_field);
        maybe(ja, "label", a.label, [](const json& v) { return v.get<std::string>(); });
        if (ja.contains("min")) {
          const json& v = ja.at("min");
          a.min_value = v.is_string() ? static_cast<double>(parse_bandwidth(v.get<std::string>()).bits_per_sec())
                                      : v.get<double>();
        }
        if (ja.contains("max")) {
          const json& v = ja.at("max");
          a.max_value = v.is_string() ? static_cast<double>(parse_bandwidth(v.get<std::string>()).bits_per_sec())
                                      : v.get<double>();
        }
        if (ja.contains("min_seconds")) a.min_value = ja.at("min_seconds").get<double>();
        if (ja.contains("max_seconds")) a.max_value = ja.at("max_seconds").get<double>();
        spec.assertions.push_back(std::move(a));
      }
    }
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario schema error: ") + e.what());
  }

  // Cross-checks: every referenced service must exist.
  for (const auto& w : spec.workloads) spec.service_id(w.service);
  for (const auto& [name, _] : spec.fabric_caps) spec.service_id(name);
  for (const auto& t : {spec.machine_tx, spec.machine_rx, spec.rack_up, spec.rack_down}) {
    for (const auto& n : t.nodes) spec.service_id(n.service);
  }
  if (spec.topo.racks < 1 || spec.topo.hosts_per_rack < 1) {
    throw ScenarioError("topology needs at least one rack and one host");
  }
  if (spec.horizon_ns <= 0) throw ScenarioError("horizon must be positive");
  return spec;
}

ScenarioSpec scenario_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json_text(ss.str());
}

}  // namespace bwbroker::sim
