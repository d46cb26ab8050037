#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bwbroker/units.hpp"

namespace bwbroker {

// Identifies a service node within one contention point's tree.
using ServiceId = uint32_t;

enum class ContentionPoint { kMachineTx, kMachineRx, kRackUp, kRackDown, kFabric };

const char* to_string(ContentionPoint p);

// One node of a sharing policy: a guaranteed minimum, a limit, and a weight
// for dividing bandwidth in excess of the guarantees.
struct PolicyNode {
  ServiceId id = 0;
  std::optional<ServiceId> parent;
  Bandwidth min_bw = Bandwidth::bps(0);
  Bandwidth max_bw = Bandwidth::unlimited();
  double weight = 1.0;
  std::string name;  // optional, for config and trace readability
};

enum class PolicyViolation {
  kEmptyTree,
  kOrphanNode,
  kCycleDetected,
  kMultipleRoots,
  kMinExceedsMax,
  kGuaranteeOvercommit,
  kNonPositiveWeight,
  kDuplicateId,
};

const char* to_string(PolicyViolation v);

struct ValidationIssue {
  PolicyViolation kind;
  ServiceId node;
  std::string detail;
};

struct ValidationResult {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

// A sharing policy for one contention point and one direction. Nodes form a
// rooted tree; the leaves are the enforceable endpoints. Instances are
// immutable once validated and may be shared read-only across brokers.
class PolicyTree {
 public:
  PolicyTree() = default;
  PolicyTree(ContentionPoint point, int64_t capacity_bps, std::vector<PolicyNode> nodes);

  ContentionPoint point() const { return point_; }
  int64_t capacity() const { return capacity_; }

  const std::vector<PolicyNode>& nodes() const { return nodes_; }
  bool has_node(ServiceId id) const { return index_.count(id) != 0; }
  const PolicyNode& node(ServiceId id) const;

  // Children in ascending id order; empty for leaves and unknown ids.
  const std::vector<ServiceId>& children(ServiceId id) const;
  bool is_leaf(ServiceId id) const { return children(id).empty(); }
  // Leaf ids, ascending.
  std::vector<ServiceId> leaves() const;
  // Root id; only meaningful on a validated tree.
  ServiceId root() const { return root_; }

  // Replaces a node's max_bw. Intended for broker-local copies that fold in
  // dynamically pushed limits before the tree is shared.
  void set_max_bw(ServiceId id, Bandwidth max_bw);

 private:
  ContentionPoint point_ = ContentionPoint::kRackUp;
  int64_t capacity_ = 0;
  std::vector<PolicyNode> nodes_;
  std::map<ServiceId, size_t> index_;
  std::map<ServiceId, std::vector<ServiceId>> children_;
  ServiceId root_ = 0;
  bool has_root_ = false;

  friend ValidationResult validate_tree(const PolicyTree&);
};

// Checks all structural and admission invariants:
//  - every non-root parent exists (OrphanNode), parent links acyclic
//    (CycleDetected), exactly one root (MultipleRoots);
//  - min <= max per node (MinExceedsMax), weight > 0;
//  - for every internal node, min >= sum of child mins, and the root-level
//    mins fit in the capacity (GuaranteeOvercommit).
// Pure: same tree, same result.
ValidationResult validate_tree(const PolicyTree& tree);

// Most-constrained static cap for a leaf: min over the leaf and all of its
// ancestors of max_bw, further capped by the tree capacity.
// Throws UnknownLeafError.
int64_t effective_cap(const PolicyTree& tree, ServiceId leaf);

// Loads a policy tree from its JSON document form:
//   {"contention_point": "RackUp", "direction": "tx", "capacity": "10Gb/s",
//    "nodes": [{"id":0,"name":"root"},
//              {"id":1,"parent":0,"min":"6Gb/s","max":"8Gb/s","weight":2}]}
// Bandwidth fields accept human units. Throws ScenarioError on schema
// problems; does not run validate_tree.
PolicyTree policy_tree_from_json_text(const std::string& text);
PolicyTree policy_tree_from_json_file(const std::string& path);

}  // namespace bwbroker
