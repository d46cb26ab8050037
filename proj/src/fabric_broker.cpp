#include "bwbroker/fabric_broker.hpp"

#include <vector>

#include "bwbroker/allocator.hpp"
#include "bwbroker/errors.hpp"

namespace bwbroker {

uint32_t leader_for(const std::set<uint32_t>& live_machines) {
  if (live_machines.empty()) {
    throw EmptyRackError("cannot pick a leader for an empty rack");
  }
  return *live_machines.begin();
}

void FabricBroker::add_rack(uint32_t rack, int64_t uplink_bps) {
  rack_uplink_bps_[rack] = uplink_bps;
}

void FabricBroker::set_service_cap(uint32_t service, Bandwidth cap) {
  if (cap.is_unlimited()) {
    service_caps_.erase(service);
  } else {
    service_caps_[service] = cap;
  }
}

void FabricBroker::on_rack_report(const UsageReport& report, SimTime now) {
  if (rack_uplink_bps_.count(report.sender) == 0) {
    throw UnknownRackError("report from unknown rack " + std::to_string(report.sender));
  }
  StoredReport stored;
  stored.last_seen = now;
  for (const auto& [svc, util] : report.entries) {
    stored.usage[svc] = static_cast<int64_t>(util);
  }
  reports_[report.sender] = std::move(stored);
}

std::map<uint32_t, std::map<uint32_t, Bandwidth>> FabricBroker::tick(SimTime now) {
  std::map<uint32_t, std::map<uint32_t, Bandwidth>> pushes;
  if (service_caps_.empty()) return pushes;

  std::vector<uint32_t> racks;
  racks.reserve(rack_uplink_bps_.size());
  for (const auto& [rack, _] : rack_uplink_bps_) racks.push_back(rack);

  for (const auto& [svc, cap] : service_caps_) {
    std::vector<Bandwidth> demands;
    std::vector<double> weights(racks.size(), 1.0);  // racks split evenly
    std::vector<int64_t> mins(racks.size(), 0);
    std::vector<Bandwidth> maxes;
    demands.reserve(racks.size());
    maxes.reserve(racks.size());
    for (uint32_t rack : racks) {
      int64_t usage = 0;
      auto it = reports_.find(rack);
      if (it != reports_.end() && now - it->second.last_seen <= cfg_.report_timeout_ns) {
        auto u = it->second.usage.find(svc);
        if (u != it->second.usage.end()) usage = u->second;
      }
      auto p = prev_.find({svc, rack});
      int64_t demand = p == prev_.end()
                           ? usage
                           : inflate_limited_demand(usage, p->second.first, p->second.second);
      demands.push_back(Bandwidth::bps(demand));
      maxes.push_back(Bandwidth::bps(rack_uplink_bps_.at(rack)));
    }

    std::vector<int64_t> shares =
        water_fill(demands, weights, mins, maxes, cap.bits_per_sec());
    for (size_t i = 0; i < racks.size(); ++i) {
      const bool limited = Bandwidth::bps(shares[i]) < demands[i];
      prev_[{svc, racks[i]}] = {shares[i], limited};
      pushes[racks[i]][svc] = limited ? Bandwidth::bps(shares[i]) : Bandwidth::unlimited();
    }
  }
  return pushes;
}

}  // namespace bwbroker
