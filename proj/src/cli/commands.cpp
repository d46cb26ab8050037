#include "cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bwbroker/allocator.hpp"
#include "bwbroker/errors.hpp"
#include "bwbroker/latency.hpp"
#include "bwbroker/policy.hpp"
#include "bwbroker/sim/rng.hpp"
#include "bwbroker/sim/simulation.hpp"
#include "json.hpp"

namespace bwbroker::cli {

namespace {

int log_level() {
  static int level = [] {
    const char* env = std::getenv("BWBROKER_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "off") return 0;
    if (v == "debug") return 2;
    return 1;
  }();
  return level;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[bwbroker] %s\n", msg.c_str());
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

int cmd_run(const RunOptions& opts) {
  sim::ScenarioSpec spec;
  try {
    spec = sim::scenario_from_json_file(opts.scenario_path);
    if (opts.seed >= 0) spec.seed = static_cast<uint64_t>(opts.seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  info("running scenario '" + spec.name + "' (seed " + std::to_string(spec.seed) + ")");
  sim::RunResult result = sim::run_scenario(spec);

  std::string out_dir = opts.out_dir;
  if (out_dir.empty()) {
    out_dir = opts.scenario_path;
    const size_t slash = out_dir.find_last_of('/');
    const size_t dot = out_dir.find_last_of('.');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
      out_dir = out_dir.substr(0, dot);
    }
    out_dir += "_out";
  }
  result.traces.write_csvs(out_dir);

  // summary.json: per-service FCT stats plus assertion outcomes.
  std::ostringstream summary;
  summary << "{\n  \"scenario\": \"" << json_escape(spec.name) << "\",\n";
  summary << "  \"seed\": " << spec.seed << ",\n";
  summary << "  \"services\": {\n";
  bool first = true;
  for (const auto& [id, name] : result.traces.service_names()) {
    const double p99 =
        result.traces.fct_quantile_seconds(id, 0.99, 0, spec.horizon_ns);
    const double p50 = result.traces.fct_quantile_seconds(id, 0.5, 0, spec.horizon_ns);
    const size_t flows = result.traces.finished_flows(id, 0, spec.horizon_ns);
    if (!first) summary << ",\n";
    first = false;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "    \"%s\": {\"flows\": %zu, \"p50_fct_ms\": %.6f, \"p99_fct_ms\": %.6f}",
                  json_escape(name).c_str(), flows, p50 < 0 ? -1.0 : p50 * 1e3,
                  p99 < 0 ? -1.0 : p99 * 1e3);
    summary << buf;
  }
  summary << "\n  },\n  \"assertions\": [\n";
  for (size_t i = 0; i < result.assertions.size(); ++i) {
    const sim::AssertionResult& a = result.assertions[i];
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "    {\"label\": \"%s\", \"passed\": %s, \"observed\": %.6f, "
                  "\"detail\": \"%s\"}%s\n",
                  json_escape(a.label).c_str(), a.passed ? "true" : "false", a.observed,
                  json_escape(a.detail).c_str(),
                  i + 1 < result.assertions.size() ? "," : "");
    summary << buf;
  }
  summary << "  ]\n}\n";
  {
    std::ofstream out(out_dir + "/summary.json", std::ios::binary);
    out << summary.str();
  }

  if (opts.gnuplot) {
    std::ofstream gp(out_dir + "/plot.gp", std::ios::binary);
    gp << "set datafile separator ','\n"
       << "set xlabel 'time (s)'\n"
       << "set ylabel 'utilization (bits/s)'\n"
       << "# plot one (scope, service) series from util.csv, e.g.:\n"
       << "plot '< grep \",fabric,\" util.csv' using 1:4 with lines title 'fabric'\n";
  }

  for (const sim::AssertionResult& a : result.assertions) {
    std::printf("[%s] %s: %s\n", a.passed ? "PASS" : "FAIL", a.label.c_str(),
                a.detail.c_str());
  }
  std::printf("traces written to %s\n", out_dir.c_str());
  return result.all_passed() ? 0 : 1;
}

namespace {

DemandVector demands_from_json(const PolicyTree& tree, const std::string& path) {
  DemandVector demands;
  for (ServiceId leaf : tree.leaves()) demands[leaf] = Bandwidth::bps(0);
  if (path.empty()) return demands;

  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open demands file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("demands JSON parse error: ") + e.what());
  }
  if (doc.contains("demands")) doc = doc.at("demands");

  auto find_leaf = [&](const std::string& key) -> ServiceId {
    for (const PolicyNode& n : tree.nodes()) {
      if (n.name == key && tree.is_leaf(n.id)) return n.id;
    }
    try {
      const ServiceId id = static_cast<ServiceId>(std::stoul(key));
      if (tree.has_node(id) && tree.is_leaf(id)) return id;
    } catch (const std::exception&) {
    }
    throw UnknownLeafError("demands refer to unknown leaf '" + key + "'");
  };

  for (const auto& [key, value] : doc.items()) {
    Bandwidth bw = value.is_string() ? parse_bandwidth(value.get<std::string>())
                                     : Bandwidth::bps(value.get<int64_t>());
    demands[find_leaf(key)] = bw;
  }
  return demands;
}

}  // namespace

double bench_water_fill_seconds(int n, int repeats, uint64_t seed) {
  sim::Rng rng(seed, 7);
  const int64_t capacity = 80'000'000'000;  // one rack uplink's worth
  std::vector<int64_t> demands(n);
  std::vector<double> weights(n, 1.0);
  // Random demands with the offered load close to the capacity.
  for (int i = 0; i < n; ++i) {
    demands[i] = static_cast<int64_t>(rng.uniform(0.5, 1.5) *
                                      static_cast<double>(capacity) / n);
  }
  volatile int64_t guard = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) {
    std::vector<int64_t> out = water_fill(demands, weights, capacity);
    guard += out[static_cast<size_t>(r) % out.size()];
  }
  const auto stop = std::chrono::steady_clock::now();
  (void)guard;
  return std::chrono::duration<double>(stop - start).count() / repeats;
}

int cmd_alloc(const AllocOptions& opts) {
  PolicyTree tree;
  DemandVector demands;
  try {
    tree = policy_tree_from_json_file(opts.policy_path);
    ValidationResult vr = validate_tree(tree);
    if (!vr.ok()) {
      for (const ValidationIssue& issue : vr.issues) {
        std::fprintf(stderr, "policy violation: %s at node %u: %s\n",
                     to_string(issue.kind), issue.node, issue.detail.c_str());
      }
      return 2;
    }
    demands = demands_from_json(tree, opts.demands_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  RuntimeCaps caps = compute_runtime_policy(tree, demands);
  DemandVector agg = aggregate_demands(tree, demands);
  Allocation alloc = distribute(tree, agg);

  std::printf("%-16s %14s %14s %8s\n", "leaf", "demand", "allocation", "limited");
  for (ServiceId leaf : tree.leaves()) {
    const PolicyNode& node = tree.node(leaf);
    const std::string label = node.name.empty() ? std::to_string(leaf) : node.name;
    const NodeAllocation& a = alloc.nodes.at(leaf);
    std::printf("%-16s %14s %14s %8s\n", label.c_str(),
                format_bandwidth(demands.at(leaf)).c_str(),
                format_bandwidth(Bandwidth::bps(a.rate)).c_str(),
                a.limited ? "yes" : "no");
  }
  std::printf("installed caps (limited leaves enforce the allocation, others their static cap):\n");
  for (ServiceId leaf : tree.leaves()) {
    const PolicyNode& node = tree.node(leaf);
    const std::string label = node.name.empty() ? std::to_string(leaf) : node.name;
    const NodeAllocation& c = caps.leaf_caps.at(leaf);
    std::printf("  %-14s cap %14s %s\n", label.c_str(),
                format_bandwidth(Bandwidth::bps(c.rate)).c_str(),
                c.limited ? "(limiter installed)" : "(static)");
  }

  if (opts.bench_n > 0) {
    const int repeats = std::max(1, 2'000'000 / opts.bench_n);
    const double secs = bench_water_fill_seconds(opts.bench_n, repeats);
    std::printf("water_fill N=%d: %.1f us per invocation (%d repeats)\n", opts.bench_n,
                secs * 1e6, repeats);
  }
  return 0;
}

int cmd_bound(const BoundOptions& opts) {
  try {
    if (opts.quantile >= 0) {
      Mm1Model model{opts.mu_per_sec, opts.rho};
      const double t = mm1_fct_quantile(model, opts.quantile);
      std::printf("mm1 p%.4g completion time: %.4f ms\n", opts.quantile * 100, t * 1e3);
      return 0;
    }
    if (opts.rho >= 1.0) {
      std::fprintf(stderr,
                   "warning: rho >= 1 has no finite bound; the queue is unstable\n");
      return 1;
    }
    double sigma = opts.sigma_bits;
    if (sigma < 0) {
      sigma = sigma_from_convergence(opts.capacity_bps, opts.conv_iters, opts.interval_s,
                                     opts.burst_bits);
    }
    ArrivalEnvelope env{sigma, opts.rho, opts.capacity_bps};
    const double bound = fct_bound_seconds(env, opts.flow_bytes * 8.0);
    std::printf("fct bound: %.2f ms  (sigma=%.0f bits, rho=%.3f, C=%.3g b/s, Z=%.0f B)\n",
                bound * 1e3, sigma, opts.rho, opts.capacity_bps, opts.flow_bytes);
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int cmd_bench(int n, int repeats) {
  for (int size = 100; size <= n; size *= 10) {
    const int reps = std::max(repeats, std::max(1, 2'000'000 / size));
    const double secs = bench_water_fill_seconds(size, reps);
    std::printf("N=%-8d %10.2f us/invocation\n", size, secs * 1e6);
  }
  return 0;
}

}  // namespace bwbroker::cli
