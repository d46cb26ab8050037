#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bwbroker/units.hpp"

namespace bwbroker::sim {

struct FlowRecord {
  uint64_t id = 0;
  uint32_t service = 0;
  uint32_t src = 0;
  uint32_t dst = 0;
  int64_t bytes = 0;       // Z
  SimTime start = 0;       // S
  SimTime finish = -1;     // F; -1 while in flight
  bool done() const { return finish >= 0; }
  SimTime fct() const { return finish - start; }
};

struct AllocRow {
  SimTime t = 0;
  uint32_t machine = 0;
  char direction = 't';  // 't' = tx/uplink, 'r' = rx/downlink
  uint32_t service = 0;
  int64_t demand_bps = 0;
  int64_t alloc_bps = 0;
  bool limited = false;
};

struct QueueBucket {
  int64_t max_bytes = 0;
  int64_t marks = 0;
  int64_t drops = 0;
};

// Everything a run produces. Per-second utilization series are kept per
// (scope, service); scopes are "rackN.up", "rackN.down", and "fabric".
class TraceSet {
 public:
  TraceSet(SimTime horizon, std::map<uint32_t, std::string> service_names);

  void add_util(const std::string& scope, uint32_t service, SimTime at, int64_t bytes);
  void add_queue_sample(const std::string& queue, SimTime at, int64_t backlog_bytes);
  void add_queue_counts(const std::string& queue, SimTime at, int64_t marks, int64_t drops);
  void add_alloc(AllocRow row) { allocs_.push_back(row); }
  void add_note(SimTime at, const std::string& text) { notes_.emplace_back(at, text); }

  uint64_t new_flow(FlowRecord rec);
  void finish_flow(uint64_t id, SimTime at);

  // Mean utilization in bits/s over whole seconds [from_s, to_s).
  double util_mean_bps(const std::string& scope, uint32_t service, int64_t from_s,
                       int64_t to_s) const;
  // Utilization of one 1-second bucket.
  double util_bps(const std::string& scope, uint32_t service, int64_t sec) const;

  // FCT quantile (0<=q<1) in seconds over flows of `service` finishing within
  // [from, to]. Returns -1 when no flow qualifies.
  double fct_quantile_seconds(uint32_t service, double q, SimTime from, SimTime to) const;
  size_t finished_flows(uint32_t service, SimTime from, SimTime to) const;

  // Jain's fairness index over the mean utilizations of `services` at scope.
  double jain_index(const std::string& scope, const std::vector<uint32_t>& services,
                    int64_t from_s, int64_t to_s) const;

  const std::vector<FlowRecord>& flows() const { return flows_; }
  const std::vector<AllocRow>& allocs() const { return allocs_; }
  const std::vector<std::pair<SimTime, std::string>>& notes() const { return notes_; }

  std::string util_csv() const;
  std::string flows_csv() const;
  std::string alloc_csv() const;
  std::string queues_csv() const;
  void write_csvs(const std::string& dir) const;

  int64_t horizon_seconds() const { return horizon_s_; }
  const std::map<uint32_t, std::string>& service_names() const { return service_names_; }

 private:
  int64_t horizon_s_;
  std::map<uint32_t, std::string> service_names_;
  // (scope, service) -> bytes per second bucket
  std::map<std::pair<std::string, uint32_t>, std::vector<int64_t>> util_;
  std::map<std::string, std::vector<QueueBucket>> queues_;
  std::vector<FlowRecord> flows_;
  std::vector<AllocRow> allocs_;
  std::vector<std::pair<SimTime, std::string>> notes_;
};

}  // namespace bwbroker::sim
