#include "bwbroker/sim/traces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bwbroker/errors.hpp"

namespace bwbroker::sim {

TraceSet::TraceSet(SimTime horizon, std::map<uint32_t, std::string> service_names)
    : horizon_s_(horizon / kSecond + 1), service_names_(std::move(service_names)) {}

void TraceSet::add_util(const std::string& scope, uint32_t service, SimTime at,
                        int64_t bytes) {
  auto& series = util_[{scope, service}];
  if (series.empty()) series.assign(static_cast<size_t>(horizon_s_), 0);
  const int64_t sec = at / kSecond;
  if (sec >= 0 && sec < horizon_s_) series[static_cast<size_t>(sec)] += bytes;
}

void TraceSet::add_queue_sample(const std::string& queue, SimTime at,
                                int64_t backlog_bytes) {
  auto& series = queues_[queue];
  if (series.empty()) series.assign(static_cast<size_t>(horizon_s_), QueueBucket{});
  const int64_t sec = at / kSecond;
  if (sec >= 0 && sec < horizon_s_) {
    auto& b = series[static_cast<size_t>(sec)];
    b.max_bytes = std::max(b.max_bytes, backlog_bytes);
  }
}

void TraceSet::add_queue_counts(const std::string& queue, SimTime at, int64_t marks,
                                int64_t drops) {
  auto& series = queues_[queue];
  if (series.empty()) series.assign(static_cast<size_t>(horizon_s_), QueueBucket{});
  const int64_t sec = at / kSecond;
  if (sec >= 0 && sec < horizon_s_) {
    auto& b = series[static_cast<size_t>(sec)];
    b.marks += marks;
    b.drops += drops;
  }
}

uint64_t TraceSet::new_flow(FlowRecord rec) {
  rec.id = flows_.size() + 1;
  flows_.push_back(rec);
  return rec.id;
}

void TraceSet::finish_flow(uint64_t id, SimTime at) {
  if (id == 0 || id > flows_.size()) return;
  FlowRecord& r = flows_[id - 1];
  if (!r.done()) r.finish = at;
}

double TraceSet::util_bps(const std::string& scope, uint32_t service, int64_t sec) const {
  auto it = util_.find({scope, service});
  if (it == util_.end()) return 0;
  if (sec < 0 || sec >= static_cast<int64_t>(it->second.size())) return 0;
  return static_cast<double>(it->second[static_cast<size_t>(sec)]) * 8.0;
}

double TraceSet::util_mean_bps(const std::string& scope, uint32_t service, int64_t from_s,
                               int64_t to_s) const {
  if (to_s <= from_s) return 0;
  double total = 0;
  for (int64_t s = from_s; s < to_s; ++s) total += util_bps(scope, service, s);
  return total / static_cast<double>(to_s - from_s);
}

double TraceSet::fct_quantile_seconds(uint32_t service, double q, SimTime from,
                                      SimTime to) const {
  std::vector<SimTime> fcts;
  for (const FlowRecord& f : flows_) {
    if (f.service != service || !f.done()) continue;
    if (f.finish < from || f.finish > to) continue;
    fcts.push_back(f.fct());
  }
  if (fcts.empty()) return -1;
  std::sort(fcts.begin(), fcts.end());
  const size_t idx = std::min(fcts.size() - 1,
                              static_cast<size_t>(std::floor(q * static_cast<double>(fcts.size()))));
  return static_cast<double>(fcts[idx]) / 1e9;
}

size_t TraceSet::finished_flows(uint32_t service, SimTime from, SimTime to) const {
  size_t n = 0;
  for (const FlowRecord& f : flows_) {
    if (f.service == service && f.done() && f.finish >= from && f.finish <= to) ++n;
  }
  return n;
}

double TraceSet::jain_index(const std::string& scope, const std::vector<uint32_t>& services,
                            int64_t from_s, int64_t to_s) const {
  double sum = 0, sum_sq = 0;
  for (uint32_t svc : services) {
    const double x = util_mean_bps(scope, svc, from_s, to_s);
    sum += x;
    sum_sq += x * x;
  }
  if (sum_sq <= 0) return 0;
  return sum * sum / (static_cast<double>(services.size()) * sum_sq);
}

namespace {

std::string service_label(const std::map<uint32_t, std::string>& names, uint32_t id) {
  auto it = names.find(id);
  return it == names.end() || it->second.empty() ? std::to_string(id) : it->second;
}

}  // namespace

std::string TraceSet::util_csv() const {
  std::string out = "time_s,scope,service,bits_per_s\n";
  char line[160];
  for (const auto& [key, series] : util_) {
    for (size_t s = 0; s < series.size(); ++s) {
      std::snprintf(line, sizeof(line), "%zu,%s,%s,%lld\n", s, key.first.c_str(),
                    service_label(service_names_, key.second).c_str(),
                    static_cast<long long>(series[s] * 8));
      out += line;
    }
  }
  return out;
}

std::string TraceSet::flows_csv() const {
  std::string out = "flow,service,src,dst,bytes,start_ns,finish_ns,fct_ns\n";
  char line[200];
  for (const FlowRecord& f : flows_) {
    if (!f.done()) continue;
    std::snprintf(line, sizeof(line), "%llu,%s,%u,%u,%lld,%lld,%lld,%lld\n",
                  static_cast<unsigned long long>(f.id),
                  service_label(service_names_, f.service).c_str(), f.src, f.dst,
                  static_cast<long long>(f.bytes), static_cast<long long>(f.start),
                  static_cast<long long>(f.finish), static_cast<long long>(f.fct()));
    out += line;
  }
  return out;
}

std::string TraceSet::alloc_csv() const {
  std::string out = "time_ns,machine,direction,service,demand_bps,alloc_bps,limited\n";
  char line[200];
  for (const AllocRow& r : allocs_) {
    std::snprintf(line, sizeof(line), "%lld,%u,%c,%s,%lld,%lld,%d\n",
                  static_cast<long long>(r.t), r.machine, r.direction,
                  service_label(service_names_, r.service).c_str(),
                  static_cast<long long>(r.demand_bps),
                  static_cast<long long>(r.alloc_bps), r.limited ? 1 : 0);
    out += line;
  }
  return out;
}

std::string TraceSet::queues_csv() const {
  std::string out = "time_s,queue,max_bytes,marks,drops\n";
  char line[160];
  for (const auto& [name, series] : queues_) {
    for (size_t s = 0; s < series.size(); ++s) {
      const QueueBucket& b = series[s];
      if (b.max_bytes == 0 && b.marks == 0 && b.drops == 0) continue;
      std::snprintf(line, sizeof(line), "%zu,%s,%lld,%lld,%lld\n", s, name.c_str(),
                    static_cast<long long>(b.max_bytes), static_cast<long long>(b.marks),
                    static_cast<long long>(b.drops));
      out += line;
    }
  }
  return out;
}

void TraceSet::write_csvs(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& file, const std::string& content) {
    std::ofstream out(dir + "/" + file, std::ios::binary);
    if (!out) throw Error("cannot write " + dir + "/" + file);
    out << content;
  };
  write("util.csv", util_csv());
  write("flows.csv", flows_csv());
  write("alloc.csv", alloc_csv());
  write("queues.csv", queues_csv());
}

}  // namespace bwbroker::sim
