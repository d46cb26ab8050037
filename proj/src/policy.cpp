#include "bwbroker/policy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bwbroker/errors.hpp"
#include "json.hpp"

namespace bwbroker {

const char* to_string(ContentionPoint p) {
  switch (p) {
    case ContentionPoint::kMachineTx: return "MachineTx";
    case ContentionPoint::kMachineRx: return "MachineRx";
    case ContentionPoint::kRackUp: return "RackUp";
    case ContentionPoint::kRackDown: return "RackDown";
    case ContentionPoint::kFabric: return "Fabric";
  }
  return "?";
}

const char* to_string(PolicyViolation v) {
  switch (v) {
    case PolicyViolation::kEmptyTree: return "EmptyTree";
    case PolicyViolation::kOrphanNode: return "OrphanNode";
    case PolicyViolation::kCycleDetected: return "CycleDetected";
    case PolicyViolation::kMultipleRoots: return "MultipleRoots";
    case PolicyViolation::kMinExceedsMax: return "MinExceedsMax";
    case PolicyViolation::kGuaranteeOvercommit: return "GuaranteeOvercommit";
    case PolicyViolation::kNonPositiveWeight: return "NonPositiveWeight";
    case PolicyViolation::kDuplicateId: return "DuplicateId";
  }
  return "?";
}

PolicyTree::PolicyTree(ContentionPoint point, int64_t capacity_bps,
                       std::vector<PolicyNode> nodes)
    : point_(point), capacity_(capacity_bps), nodes_(std::move(nodes)) {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    index_.emplace(nodes_[i].id, i);
  }
  for (const PolicyNode& n : nodes_) {
    if (!n.parent.has_value()) {
      if (!has_root_) {
        root_ = n.id;
        has_root_ = true;
      }
      continue;
    }
    if (index_.count(*n.parent)) {
      children_[*n.parent].push_back(n.id);
    }
  }
  for (auto& [id, kids] : children_) {
    std::sort(kids.begin(), kids.end());
  }
}

const PolicyNode& PolicyTree::node(ServiceId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw UnknownLeafError("unknown node id " + std::to_string(id));
  }
  return nodes_[it->second];
}

const std::vector<ServiceId>& PolicyTree::children(ServiceId id) const {
  static const std::vector<ServiceId> kNone;
  auto it = children_.find(id);
  return it == children_.end() ? kNone : it->second;
}

std::vector<ServiceId> PolicyTree::leaves() const {
  std::vector<ServiceId> out;
  for (const PolicyNode& n : nodes_) {
    if (is_leaf(n.id)) out.push_back(n.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void PolicyTree::set_max_bw(ServiceId id, Bandwidth max_bw) {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw UnknownLeafError("unknown node id " + std::to_string(id));
  }
  nodes_[it->second].max_bw = max_bw;
}

ValidationResult validate_tree(const PolicyTree& tree) {
  ValidationResult result;
  auto add = [&](PolicyViolation kind, ServiceId node, std::string detail) {
    result.issues.push_back({kind, node, std::move(detail)});
  };

  if (tree.nodes().empty()) {
    add(PolicyViolation::kEmptyTree, 0, "tree has no nodes");
    return result;
  }

  std::map<ServiceId, int> seen;
  for (const PolicyNode& n : tree.nodes()) {
    if (++seen[n.id] == 2) {
      add(PolicyViolation::kDuplicateId, n.id, "id appears more than once");
    }
  }

  int roots = 0;
  for (const PolicyNode& n : tree.nodes()) {
    if (!n.parent.has_value()) {
      ++roots;
      if (roots > 1) add(PolicyViolation::kMultipleRoots, n.id, "second root");
      continue;
    }
    if (!tree.has_node(*n.parent)) {
      add(PolicyViolation::kOrphanNode, n.id,
          "parent " + std::to_string(*n.parent) + " does not exist");
    }
  }

  // Walk parent chains; a chain longer than the node count means a cycle.
  const size_t limit = tree.nodes().size();
  for (const PolicyNode& n : tree.nodes()) {
    size_t steps = 0;
    std::optional<ServiceId> cur = n.parent;
    while (cur.has_value() && tree.has_node(*cur)) {
      if (++steps > limit) {
        add(PolicyViolation::kCycleDetected, n.id, "parent chain loops");
        break;
      }
      cur = tree.node(*cur).parent;
    }
  }

  for (const PolicyNode& n : tree.nodes()) {
    if (!n.max_bw.is_unlimited() && !n.min_bw.is_unlimited() &&
        n.max_bw < n.min_bw) {
      add(PolicyViolation::kMinExceedsMax, n.id,
          "min " + format_bandwidth(n.min_bw) + " > max " + format_bandwidth(n.max_bw));
    }
    if (!(n.weight > 0)) {
      add(PolicyViolation::kNonPositiveWeight, n.id, "weight must be > 0");
    }
  }

  // Admission: a parent's guarantee covers the sum of its children's, and the
  // root-level guarantees fit in the capacity even if everybody demands them.
  for (const PolicyNode& n : tree.nodes()) {
    const auto& kids = tree.children(n.id);
    if (kids.empty()) continue;
    int64_t child_min_sum = 0;
    for (ServiceId c : kids) {
      child_min_sum += tree.node(c).min_bw.bits_per_sec();
    }
    // The root's guarantee budget is the capacity itself.
    const bool is_root = !n.parent.has_value();
    if (!is_root && n.min_bw.is_unlimited()) continue;
    int64_t budget = is_root ? tree.capacity() : n.min_bw.bits_per_sec();
    if (child_min_sum > budget) {
      add(PolicyViolation::kGuaranteeOvercommit, n.id,
          "child guarantees sum to " + format_bandwidth(Bandwidth::bps(child_min_sum)) +
          " > " + format_bandwidth(Bandwidth::bps(budget)));
    }
  }
  return result;
}

int64_t effective_cap(const PolicyTree& tree, ServiceId leaf) {
  if (!tree.has_node(leaf)) {
    throw UnknownLeafError("unknown leaf " + std::to_string(leaf));
  }
  Bandwidth cap = Bandwidth::unlimited();
  std::optional<ServiceId> cur = leaf;
  size_t steps = 0;
  while (cur.has_value()) {
    const PolicyNode& n = tree.node(*cur);
    cap = min(cap, n.max_bw);
    cur = n.parent;
    if (++steps > tree.nodes().size()) {
      throw Error("cycle while walking ancestors of " + std::to_string(leaf));
    }
  }
  return cap.clamped(tree.capacity());
}

namespace {

Bandwidth bandwidth_field(const nlohmann::json& v) {
  if (v.is_string()) return parse_bandwidth(v.get<std::string>());
  if (v.is_number()) return Bandwidth::bps(v.get<int64_t>());
  throw ScenarioError("bandwidth field must be a string or number");
}

ContentionPoint point_from_string(const std::string& s) {
  if (s == "MachineTx") return ContentionPoint::kMachineTx;
  if (s == "MachineRx") return ContentionPoint::kMachineRx;
  if (s == "RackUp") return ContentionPoint::kRackUp;
  if (s == "RackDown") return ContentionPoint::kRackDown;
  if (s == "Fabric") return ContentionPoint::kFabric;
  throw ScenarioError("unknown contention_point '" + s + "'");
}

}  // namespace

PolicyTree policy_tree_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("policy JSON parse error: ") + e.what());
  }
  try {
    ContentionPoint point = ContentionPoint::kRackUp;
    if (doc.contains("contention_point")) {
      point = point_from_string(doc.at("contention_point").get<std::string>());
    }
    if (doc.contains("direction")) {
      const std::string dir = doc.at("direction").get<std::string>();
      if (dir != "tx" && dir != "rx") {
        throw ScenarioError("direction must be 'tx' or 'rx'");
      }
    }
    int64_t capacity = bandwidth_field(doc.at("capacity")).bits_per_sec();
    std::vector<PolicyNode> nodes;
    for (const auto& jn : doc.at("nodes")) {
      PolicyNode n;
      n.id = jn.at("id").get<ServiceId>();
      if (jn.contains("parent") && !jn.at("parent").is_null()) {
        n.parent = jn.at("parent").get<ServiceId>();
      }
      if (jn.contains("min")) n.min_bw = bandwidth_field(jn.at("min"));
      if (jn.contains("max")) n.max_bw = bandwidth_field(jn.at("max"));
      if (jn.contains("weight")) n.weight = jn.at("weight").get<double>();
      if (jn.contains("name")) n.name = jn.at("name").get<std::string>();
      nodes.push_back(std::move(n));
    }
    return PolicyTree(point, capacity, std::move(nodes));
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("policy JSON schema error: ") + e.what());
  }
}

PolicyTree policy_tree_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open policy file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_tree_from_json_text(ss.str());
}

}  // namespace bwbroker
