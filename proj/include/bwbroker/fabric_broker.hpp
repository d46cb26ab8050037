#pragma once

#include <cstdint>
#include <map>
#include <set>

#include "bwbroker/units.hpp"
#include "bwbroker/wire.hpp"

namespace bwbroker {

// Deterministic rack leadership: the lowest machine id among live machines.
// Throws EmptyRackError.
uint32_t leader_for(const std::set<uint32_t>& live_machines);

struct FabricBrokerConfig {
  SimTime interval_ns = 10 * kSecond;      // T_fabric
  SimTime report_timeout_ns = 50 * kSecond;  // racks silent longer are ignored
};

// Cluster-level distributed rate limiting: splits each fabric-capped
// service's global budget across racks with the same water-fill, pushing
// limits only to racks whose demand exceeds their share.
class FabricBroker {
 public:
  explicit FabricBroker(FabricBrokerConfig cfg = {}) : cfg_(cfg) {}

  void add_rack(uint32_t rack, int64_t uplink_bps);
  void set_service_cap(uint32_t service, Bandwidth cap);
  const FabricBrokerConfig& config() const { return cfg_; }

  // Rack leaders report (service -> usage) with sender = rack id.
  // Throws UnknownRackError for unregistered racks.
  void on_rack_report(const UsageReport& report, SimTime now);

  // Per rack: service -> limit. Unlimited means "no limit" (clears any
  // previously pushed limit). Racks never mentioned keep their state until
  // their own timeout fires. Empty result when no service has a fabric cap.
  std::map<uint32_t, std::map<uint32_t, Bandwidth>> tick(SimTime now);

 private:
  struct StoredReport {
    std::map<uint32_t, int64_t> usage;
    SimTime last_seen = 0;
  };

  FabricBrokerConfig cfg_;
  std::map<uint32_t, int64_t> rack_uplink_bps_;
  std::map<uint32_t, Bandwidth> service_caps_;
  std::map<uint32_t, StoredReport> reports_;
  // (service, rack) -> previous allocation, for demand headroom.
  std::map<std::pair<uint32_t, uint32_t>, std::pair<int64_t, bool>> prev_;
};

}  // namespace bwbroker
