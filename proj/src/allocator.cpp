#include "bwbroker/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bwbroker/errors.hpp"

namespace bwbroker {

namespace {

constexpr int64_t kSumCap = std::numeric_limits<int64_t>::max() / 4;

int64_t saturating_add(int64_t a, int64_t b) {
  return (a > kSumCap - b) ? kSumCap : a + b;
}

}  // namespace

std::vector<int64_t> water_fill(const std::vector<Bandwidth>& demands,
                                const std::vector<double>& weights,
                                const std::vector<int64_t>& mins,
                                const std::vector<Bandwidth>& maxes,
                                int64_t capacity) {
  const size_t n = demands.size();
  if (n == 0 || weights.size() != n || mins.size() != n || maxes.size() != n) {
    throw Error("water_fill: input lists must be non-empty and equal length");
  }
  if (capacity < 0) throw Error("water_fill: negative capacity");

  int64_t min_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!(weights[i] > 0)) throw Error("water_fill: weights must be > 0");
    if (mins[i] < 0) throw Error("water_fill: negative min");
    min_sum = saturating_add(min_sum, mins[i]);
  }
  if (min_sum > capacity) {
    throw InfeasibleMinsError("guaranteed mins sum to more than the capacity");
  }

  // Capped demand per service. An unlimited demand can absorb at most the
  // whole capacity, so clamping there changes nothing.
  std::vector<int64_t> capped(n);
  int64_t demand_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    Bandwidth d = min(demands[i], maxes[i]);
    capped[i] = d.clamped(capacity);
    if (capped[i] < 0) capped[i] = 0;
    demand_sum = saturating_add(demand_sum, capped[i]);
  }

  std::vector<int64_t> alloc(n);
  if (demand_sum <= capacity) {
    // No contention: everyone gets their capped demand.
    return capped;
  }
  const int64_t target = capacity;

  // Sweep the water level. A service contributes min(mins[i], capped[i])
  // until level reaches mins[i]/w, then w*level, then capped[i] once
  // saturated. sum(level) = fixed + active_weight*level at all times.
  struct Event {
    double level;
    uint32_t idx;
    bool start;
  };
  std::vector<Event> events;
  events.reserve(2 * n);
  double fixed = 0;
  double active_weight = 0;
  for (uint32_t i = 0; i < n; ++i) {
    const int64_t base = std::min(mins[i], capped[i]);
    if (mins[i] >= capped[i]) {
      fixed += static_cast<double>(base);  // pinned at its demand
      continue;
    }
    if (mins[i] == 0) {
      active_weight += weights[i];
    } else {
      fixed += static_cast<double>(base);
      events.push_back({static_cast<double>(mins[i]) / weights[i], i, true});
    }
    events.push_back({static_cast<double>(capped[i]) / weights[i], i, false});
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.level < b.level; });

  double level = 0;
  bool solved = false;
  size_t solve_pos = events.size();
  for (size_t e = 0; e < events.size(); ++e) {
    const Event& ev = events[e];
    if (active_weight > 0) {
      const double candidate = (static_cast<double>(target) - fixed) / active_weight;
      if (candidate >= level && candidate <= ev.level) {
        level = candidate;
        solved = true;
        solve_pos = e;
        break;
      }
    }
    level = ev.level;
    if (ev.start) {
      fixed -= static_cast<double>(std::min(mins[ev.idx], capped[ev.idx]));
      active_weight += weights[ev.idx];
    } else {
      active_weight -= weights[ev.idx];
      fixed += static_cast<double>(capped[ev.idx]);
    }
  }
  if (!solved && active_weight > 0) {
    level = (static_cast<double>(target) - fixed) / active_weight;
  }

  int64_t total = 0;
  for (size_t i = 0; i < n; ++i) {
    double r = weights[i] * level;
    int64_t v = static_cast<int64_t>(std::llround(r));
    v = std::max(v, mins[i]);
    v = std::min(v, capped[i]);
    alloc[i] = v;
    total = saturating_add(total, v);
  }

  // Rounding of the water level leaves a few bits/s of residue. Everything
  // still unsaturated at the solve point appears in the tail of the event
  // array, which is already in water-level order: a canonical order that
  // keeps permuting the inputs equivalent to permuting the outputs.
  int64_t residue = target - total;
  for (size_t e = solve_pos; e < events.size() && residue != 0; ++e) {
    const uint32_t i = events[e].idx;
    if (residue > 0 && alloc[i] < capped[i]) {
      const int64_t add = std::min(residue, capped[i] - alloc[i]);
      alloc[i] += add;
      residue -= add;
    } else if (residue < 0 && alloc[i] > std::min(mins[i], capped[i])) {
      const int64_t cut = std::min(-residue, alloc[i] - std::min(mins[i], capped[i]));
      alloc[i] -= cut;
      residue += cut;
    }
  }
  if (residue != 0) {
    // Numeric corner (the sweep missed every segment): settle over all
    // services in a deterministic order.
    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
      if (capped[a] != capped[b]) return capped[a] > capped[b];
      if (weights[a] != weights[b]) return weights[a] > weights[b];
      if (mins[a] != mins[b]) return mins[a] > mins[b];
      return a < b;
    });
    for (int pass = 0; pass < 64 && residue != 0; ++pass) {
      for (uint32_t i : order) {
        if (residue == 0) break;
        if (residue > 0 && alloc[i] < capped[i]) {
          const int64_t add = std::min(residue, capped[i] - alloc[i]);
          alloc[i] += add;
          residue -= add;
        } else if (residue < 0 && alloc[i] > std::min(mins[i], capped[i])) {
          const int64_t cut = std::min(-residue, alloc[i] - std::min(mins[i], capped[i]));
          alloc[i] -= cut;
          residue += cut;
        }
      }
    }
  }
  return alloc;
}

std::vector<int64_t> water_fill(const std::vector<int64_t>& demands,
                                const std::vector<double>& weights,
                                int64_t capacity) {
  std::vector<Bandwidth> d;
  d.reserve(demands.size());
  for (int64_t v : demands) d.push_back(Bandwidth::bps(v));
  std::vector<int64_t> mins(demands.size(), 0);
  std::vector<Bandwidth> maxes(demands.size(), Bandwidth::unlimited());
  return water_fill(d, weights, mins, maxes, capacity);
}

DemandVector aggregate_demands(const PolicyTree& tree, const DemandVector& leaf_demands) {
  DemandVector out;
  // Post-order via repeated passes is wasteful; do an explicit DFS.
  struct Frame {
    ServiceId id;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({tree.root(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& kids = tree.children(f.id);
    if (kids.empty()) {
      auto it = leaf_demands.find(f.id);
      if (it == leaf_demands.end()) {
        throw MissingLeafDemandError("no demand for leaf " + std::to_string(f.id));
      }
      out[f.id] = min(it->second, tree.node(f.id).max_bw);
      stack.pop_back();
      continue;
    }
    if (f.next_child < kids.size()) {
      stack.push_back({kids[f.next_child++], 0});
      continue;
    }
    Bandwidth sum = Bandwidth::bps(0);
    bool any_unlimited = false;
    int64_t acc = 0;
    for (ServiceId c : kids) {
      Bandwidth d = out.at(c);
      if (d.is_unlimited()) {
        any_unlimited = true;
      } else {
        acc = saturating_add(acc, d.bits_per_sec());
      }
    }
    sum = any_unlimited ? Bandwidth::unlimited() : Bandwidth::bps(acc);
    out[f.id] = min(sum, tree.node(f.id).max_bw);
    stack.pop_back();
  }
  return out;
}

Allocation distribute(const PolicyTree& tree, const DemandVector& aggregated) {
  Allocation result;
  const ServiceId root = tree.root();
  auto root_it = aggregated.find(root);
  if (root_it == aggregated.end()) {
    throw MissingLeafDemandError("aggregated demands missing the root");
  }
  const int64_t root_alloc = root_it->second.clamped(tree.capacity());
  result.nodes[root] = {root_alloc, Bandwidth::bps(root_alloc) < root_it->second};

  std::vector<ServiceId> queue{root};
  while (!queue.empty()) {
    ServiceId id = queue.back();
    queue.pop_back();
    const auto& kids = tree.children(id);
    if (kids.empty()) continue;
    const int64_t budget = result.nodes.at(id).rate;

    std::vector<Bandwidth> demands;
    std::vector<double> weights;
    std::vector<int64_t> mins;
    std::vector<Bandwidth> maxes;
    demands.reserve(kids.size());
    for (ServiceId c : kids) {
      auto it = aggregated.find(c);
      if (it == aggregated.end()) {
        throw MissingLeafDemandError("aggregated demands missing node " + std::to_string(c));
      }
      const PolicyNode& cn = tree.node(c);
      demands.push_back(it->second);
      weights.push_back(cn.weight);
      // A guarantee beyond the child's own demand is moot; clamping keeps the
      // mins feasible at every level of the recursion.
      int64_t m = cn.min_bw.is_unlimited() ? budget : cn.min_bw.bits_per_sec();
      if (!it->second.is_unlimited()) m = std::min(m, it->second.bits_per_sec());
      mins.push_back(m);
      maxes.push_back(cn.max_bw);
    }
    std::vector<int64_t> shares = water_fill(demands, weights, mins, maxes, budget);
    for (size_t k = 0; k < kids.size(); ++k) {
      const bool limited = Bandwidth::bps(shares[k]) < demands[k];
      result.nodes[kids[k]] = {shares[k], limited};
      queue.push_back(kids[k]);
    }
  }
  return result;
}

RuntimeCaps compute_runtime_policy(const PolicyTree& tree, const DemandVector& leaf_demands) {
  DemandVector agg = aggregate_demands(tree, leaf_demands);
  Allocation alloc = distribute(tree, agg);
  RuntimeCaps caps;
  for (ServiceId leaf : tree.leaves()) {
    const NodeAllocation& a = alloc.nodes.at(leaf);
    if (a.limited) {
      caps.leaf_caps[leaf] = a;
    } else {
      caps.leaf_caps[leaf] = {effective_cap(tree, leaf), false};
    }
  }
  return caps;
}

int64_t inflate_limited_demand(int64_t measured_bps, int64_t prev_alloc_bps, bool was_limited) {
  if (!was_limited || prev_alloc_bps <= 0) return measured_bps;
  // A silent service is the only proof of idleness; release it immediately.
  if (measured_bps == 0) return 0;
  // 95% of the previous allocation counts as "the limiter was binding": open
  // 10% headroom so the service can ramp.
  if (measured_bps * 20 >= prev_alloc_bps * 19) {
    return std::max(measured_bps, prev_alloc_bps + prev_alloc_bps / 10);
  }
  // Active but under its allocation: transient congestion can suppress a
  // paced service below its cap, so hold most of the allocation rather than
  // releasing it outright; genuine demand drops still decay geometrically.
  return std::max(measured_bps, prev_alloc_bps - prev_alloc_bps / 10);
}

}  // namespace bwbroker
