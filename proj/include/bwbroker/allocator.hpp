#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "bwbroker/policy.hpp"

namespace bwbroker {

// Measured (leaf) or derived (internal) demand per node. Unlimited stands for
// "as much as it can get" and is useful for standalone what-if allocations;
// broker-measured demands are always finite.
using DemandVector = std::map<ServiceId, Bandwidth>;

struct NodeAllocation {
  int64_t rate = 0;    // bits/s
  bool limited = false;  // false when the demand is below the computed share

  friend bool operator==(const NodeAllocation&, const NodeAllocation&) = default;
};

struct Allocation {
  std::map<ServiceId, NodeAllocation> nodes;
};

// Per-leaf enforceable capacities derived from an Allocation: a leaf whose
// demand was satisfied is not rate limited and gets its static effective cap.
struct RuntimeCaps {
  std::map<ServiceId, NodeAllocation> leaf_caps;
};

// Weighted max-min water-fill across one level of siblings.
//
// Every service whose (max-capped) demand is at or below its fair share is
// fully satisfied; each unsatisfied service i receives max(mins[i], w_i*level)
// capped at min(demands[i], maxes[i]) for one common water level. The
// allocations sum to min(capacity, sum of capped demands), exactly.
//
// Throws InfeasibleMinsError when sum(mins) > capacity.
std::vector<int64_t> water_fill(const std::vector<Bandwidth>& demands,
                                const std::vector<double>& weights,
                                const std::vector<int64_t>& mins,
                                const std::vector<Bandwidth>& maxes,
                                int64_t capacity);

// Convenience overload for finite demands with no mins or maxes.
std::vector<int64_t> water_fill(const std::vector<int64_t>& demands,
                                const std::vector<double>& weights,
                                int64_t capacity);

// Bottom-up pass: each internal node's demand is the sum of its children's,
// capped by the node's max. Leaf entries must all be present
// (MissingLeafDemandError otherwise).
DemandVector aggregate_demands(const PolicyTree& tree, const DemandVector& leaf_demands);

// Top-down pass: the root receives min(capacity, root demand); every node
// water-fills its allocation among its children using their (demand, weight,
// min, max). A node is `limited` when its capped demand exceeds its
// allocation.
Allocation distribute(const PolicyTree& tree, const DemandVector& aggregated);

// aggregate_demands + distribute, then converts leaf allocations into
// enforceable capacities (static effective cap for unlimited leaves).
RuntimeCaps compute_runtime_policy(const PolicyTree& tree, const DemandVector& leaf_demands);

// Demand estimate for a leaf that was rate limited in the previous interval.
// A binding limiter hides true demand (usage == cap by construction), so the
// estimate opens 10% of headroom. An active leaf measured below its cap may
// merely be suppressed by transient congestion, so its estimate holds 90% of
// the allocation (decaying geometrically if the drop is real); only a silent
// leaf releases its allocation at once.
int64_t inflate_limited_demand(int64_t measured_bps, int64_t prev_alloc_bps, bool was_limited);

}  // namespace bwbroker
