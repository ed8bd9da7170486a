#pragma once

// Hierarchical refinement of a discrete labeling: detach nodes that hurt
// their cluster, contract every cluster into a super-node, re-solve the
// contracted problem (exactly when small), expand, repeat while the
// objective strictly decreases.

#include <algorithm>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "fwtrack/error.hpp"
#include "fwtrack/fw_solver.hpp"
#include "fwtrack/graph.hpp"
#include "fwtrack/oracles.hpp"

namespace fwtrack {

struct CorrectionResult {
  Labeling labeling;                   // may use more labels than the input
  std::vector<std::size_t> detached;   // labeled nodes moved to fresh singletons
  std::vector<std::size_t> reconsidered;  // rejected nodes given fresh singletons
};

/// Sum of q_uv over neighbors u sharing v's label (0 for rejected nodes).
inline std::vector<double> intra_cluster_sums(const TrackingGraph& graph, std::span<const int> labels) {
  std::vector<double> sums(graph.size(), 0.0);
  for (const Edge& e : graph.edges()) {
    if (labels[e.u] != Labeling::kRejected && labels[e.u] == labels[e.v]) {
      sums[e.u] += e.cost;
      sums[e.v] += e.cost;
    }
  }
  return sums;
}

/// Detaches, one at a time, the labeled node with the largest positive
/// intra-cluster sum (lowest index on ties) until none is positive; each
/// detachment lowers f_G by exactly that sum.  Rejected nodes with c_v < 0
/// (c_v > 0 with `reconsider_positive_rejected`) also get fresh labels.
inline CorrectionResult correction(const TrackingGraph& graph, const Labeling& labeling,
                                   const SolverConfig& config = {}) {
  if (labeling.size() != graph.size()) throw Error("correction: dimension mismatch");
  const std::size_t n = graph.size();
  std::vector<int> labels(labeling.raw().begin(), labeling.raw().end());
  std::vector<std::vector<std::pair<std::size_t, double>>> adj = symmetric_adjacency(graph);

  int next_label = 0;
  for (int l : labels) next_label = std::max(next_label, l + 1);
  std::vector<int> member_count(static_cast<std::size_t>(std::max(next_label, 1)), 0);
  for (int l : labels) {
    if (l != Labeling::kRejected) ++member_count[static_cast<std::size_t>(l)];
  }
  // Fresh labels: unused indices below P first, then P, P+1, ...
  std::vector<int> free_labels;
  for (int l = labeling.num_labels() - 1; l >= 0; --l) {
    if (l >= next_label || member_count[static_cast<std::size_t>(l)] == 0) free_labels.push_back(l);
  }
  int overflow = labeling.num_labels();
  auto fresh_label = [&]() {
    if (!free_labels.empty()) {
      const int l = free_labels.back();
      free_labels.pop_back();
      return l;
    }
    return overflow++;
  };

  CorrectionResult out;
  std::vector<double> sums = intra_cluster_sums(graph, labels);
  while (true) {
    std::size_t worst = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (labels[v] != Labeling::kRejected && sums[v] > 0.0 && (worst == n || sums[v] > sums[worst])) worst = v;
    }
    if (worst == n) break;
    const int old_label = labels[worst];
    for (const auto& [u, q] : adj[worst]) {
      if (labels[u] == old_label) sums[u] -= q;
    }
    sums[worst] = 0.0;
    labels[worst] = fresh_label();
    out.detached.push_back(worst);
  }

  for (std::size_t v = 0; v < n; ++v) {
    if (labels[v] != Labeling::kRejected) continue;
    const double c = graph.unary(v);
    if (config.reconsider_positive_rejected ? c > 0.0 : c < 0.0) {
      labels[v] = fresh_label();
      out.reconsidered.push_back(v);
    }
  }

  out.labeling = Labeling(std::move(labels), std::max(labeling.num_labels(), overflow));
  return out;
}

struct Cluster {
  std::vector<std::size_t> members;
  bool rejected = false;  // reconsidered node, inactive in the incumbent
};

struct ContractionMap {
  std::vector<int> node_to_cluster;  // -1 for nodes outside every cluster
  std::vector<int> cluster_label;    // incumbent label per cluster, -1 if rejected
};

struct ContractedGraph {
  TrackingGraph graph;  // one node per cluster
  std::vector<Cluster> clusters;
  const TrackingGraph* origin = nullptr;

  std::size_t size() const { return clusters.size(); }
};

struct Contraction {
  ContractedGraph contracted;
  ContractionMap map;
  Labeling incumbent;  // x̂: cluster k carries label k unless rejected
};

/// One super-node per used label (clusters ordered by their smallest member).
/// Cluster unary cost = member unaries + intra-cluster pairwise costs; cluster
/// pair cost = sum of the crossing pairwise costs.
inline Contraction contract(const TrackingGraph& graph, const Labeling& corrected,
                            std::span<const std::size_t> reconsidered = {}) {
  if (corrected.size() != graph.size()) throw Error("contract: dimension mismatch");
  const std::size_t n = graph.size();
  std::vector<char> is_reconsidered(n, 0);
  for (std::size_t v : reconsidered) is_reconsidered.at(v) = 1;

  Contraction out;
  auto& map = out.map;
  map.node_to_cluster.assign(n, -1);
  std::map<int, int> cluster_of_label;
  std::vector<Cluster> clusters;
  for (std::size_t v = 0; v < n; ++v) {
    if (corrected.rejected(v)) continue;
    const auto [it, inserted] = cluster_of_label.emplace(corrected.raw(v), static_cast<int>(clusters.size()));
    if (inserted) clusters.emplace_back();
    clusters[static_cast<std::size_t>(it->second)].members.push_back(v);
    map.node_to_cluster[v] = it->second;
  }
  for (auto& cl : clusters) {
    cl.rejected = cl.members.size() == 1 && is_reconsidered[cl.members.front()];
  }

  const std::size_t J = clusters.size();
  std::vector<double> unary(J, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (map.node_to_cluster[v] >= 0) unary[static_cast<std::size_t>(map.node_to_cluster[v])] += graph.unary(v);
  }
  std::map<std::pair<std::size_t, std::size_t>, double> crossing;
  for (const Edge& e : graph.edges()) {
    const int a = map.node_to_cluster[e.u], b = map.node_to_cluster[e.v];
    if (a < 0 || b < 0) continue;
    if (a == b) {
      unary[static_cast<std::size_t>(a)] += e.cost;
    } else {
      const auto lo = static_cast<std::size_t>(std::min(a, b)), hi = static_cast<std::size_t>(std::max(a, b));
      crossing[{lo, hi}] += e.cost;
    }
  }
  std::vector<Edge> edges;
  edges.reserve(crossing.size());
  for (const auto& [key, q] : crossing) edges.push_back({key.first, key.second, q});

  map.cluster_label.assign(J, -1);
  std::vector<int> incumbent(J, Labeling::kRejected);
  for (std::size_t k = 0; k < J; ++k) {
    if (!clusters[k].rejected) {
      incumbent[k] = static_cast<int>(k);
      map.cluster_label[k] = static_cast<int>(k);
    }
  }
  out.incumbent = Labeling(std::move(incumbent), static_cast<int>(std::max<std::size_t>(J, 1)));
  out.contracted.graph = TrackingGraph::from_costs(std::move(unary), std::move(edges));
  out.contracted.clusters = std::move(clusters);
  out.contracted.origin = &graph;
  return out;
}

/// Relabels with 0, 1, ... in order of first use.
inline Labeling compact_labels(const Labeling& labeling, int num_labels) {
  std::map<int, int> remap;
  std::vector<int> labels(labeling.size(), Labeling::kRejected);
  for (std::size_t v = 0; v < labeling.size(); ++v) {
    if (labeling.rejected(v)) continue;
    const auto [it, inserted] = remap.emplace(labeling.raw(v), static_cast<int>(remap.size()));
    labels[v] = it->second;
  }
  if (static_cast<int>(remap.size()) > num_labels) throw Error("compact_labels: more labels in use than available");
  return Labeling(std::move(labels), num_labels);
}

/// Solves the contracted problem with min(J, max_labels) labels: exactly via
/// branch-and-bound when J ≤ exact_threshold, otherwise with FW+λ; never
/// returns anything worse than the incumbent.
inline Labeling solve_contracted(const Contraction& contraction, const SolverConfig& config) {
  const auto& cg = contraction.contracted.graph;
  const std::size_t J = cg.size();
  if (J == 0) return Labeling(0, 1);
  const int cap = static_cast<int>(std::min<std::size_t>(J, static_cast<std::size_t>(config.max_labels)));

  if (J <= static_cast<std::size_t>(config.exact_threshold) && J <= kExactSolverMaxNodes) {
    return exact_partition_solver(cg, cap).labeling;
  }

  SolverConfig inner = config;
  inner.max_labels = cap;
  Labeling best = solve_with_schedule(cg, inner).best_binary;
  if (contraction.incumbent.used_label_count() <= static_cast<std::size_t>(cap)) {
    Labeling incumbent = compact_labels(contraction.incumbent, cap);
    if (labeling_objective(cg, incumbent) < labeling_objective(cg, best)) best = std::move(incumbent);
  }
  return best;
}

/// Every member of cluster k takes the (compacted) label of k; members of
/// rejected clusters and nodes outside all clusters are rejected.
inline Labeling expand(const ContractedGraph& cg, const Labeling& contracted_solution, const ContractionMap& map,
                       int num_labels) {
  if (contracted_solution.size() != cg.size()) throw Error("expand: contracted solution dimension mismatch");
  const Labeling compact = compact_labels(contracted_solution,
                                          std::max(contracted_solution.num_labels(), num_labels));
  const std::size_t n = map.node_to_cluster.size();
  Labeling out(n, num_labels);
  for (std::size_t v = 0; v < n; ++v) {
    const int k = map.node_to_cluster[v];
    if (k < 0) continue;
    const int l = compact.raw(static_cast<std::size_t>(k));
    if (l == Labeling::kRejected) continue;
    if (l >= num_labels) throw Error("expand: contracted solution needs more than " + std::to_string(num_labels) + " labels");
    out.assign(v, l);
  }
  return out;
}

struct HierarchyIteration {
  std::size_t clusters = 0;  // J
  double objective = 0.0;    // f_G after expansion
  std::size_t merges = 0;    // active clusters absorbed into another
  std::size_t detached = 0;
  std::size_t reconsidered = 0;
  bool accepted = false;
};

struct HierarchyResult {
  Labeling labeling;
  double objective = 0.0;
  std::vector<HierarchyIteration> iterations;
  bool hit_iteration_cap = false;
};

inline HierarchyResult solve_hierarchical(const TrackingGraph& graph, const Labeling& initial,
                                          const SolverConfig& config = {}) {
  if (initial.size() != graph.size()) throw Error("solve_hierarchical: dimension mismatch");
  HierarchyResult out;
  out.labeling = initial;
  out.objective = labeling_objective(graph, initial);
  const int P = initial.num_labels();

  for (int t = 0;; ++t) {
    if (t >= config.hierarchy_max_iterations) {
      out.hit_iteration_cap = true;
      break;
    }
    const CorrectionResult corrected = correction(graph, out.labeling, config);
    const Contraction contraction = contract(graph, corrected.labeling, corrected.reconsidered);
    const Labeling solution = solve_contracted(contraction, config);
    const Labeling next = expand(contraction.contracted, solution, contraction.map, P);

    HierarchyIteration it;
    it.clusters = contraction.contracted.size();
    it.objective = labeling_objective(graph, next);
    it.detached = corrected.detached.size();
    it.reconsidered = corrected.reconsidered.size();
    std::size_t active = 0;
    for (std::size_t k = 0; k < solution.size(); ++k) active += solution.rejected(k) ? 0 : 1;
    it.merges = active - solution.used_label_count();

    const double slack = 1e-12 * std::max(1.0, std::abs(out.objective));
    it.accepted = it.objective < out.objective - slack;
    out.iterations.push_back(it);
    if (!it.accepted) break;
    out.labeling = next;
    out.objective = it.objective;
  }
  return out;
}

}  // namespace fwtrack
