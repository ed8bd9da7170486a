#pragma once

// Exact and exhaustive references: the partition branch-and-bound used by the
// hierarchy for small contracted problems, plus brute-force counterparts of
// the line search, the rounding step and the vertex oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "fwtrack/error.hpp"
#include "fwtrack/graph.hpp"

namespace fwtrack {

inline constexpr std::size_t kExactSolverMaxNodes = 16;

struct ExactSolution {
  Labeling labeling;
  double objective = 0.0;
  std::uint64_t nodes_explored = 0;
};

/// Per-node state of a partial partition: undecided, rejected, or a block id.
inline constexpr int kUndecided = -2;

/// Admissible lower bound on every completion of `partial` (indexed by node):
///   decided objective + Σ_{w undecided} min(0, c_w + min(0, min_b S_b(w)) + ½ Σ_{u undecided} min(0, q_uw))
/// where S_b(w) is the pairwise mass between w and the decided members of
/// block b.  Pairs between undecided nodes are split evenly between their
/// endpoints.
inline double partition_lower_bound(const TrackingGraph& graph, std::span<const int> partial,
                                    std::span<const std::vector<std::pair<std::size_t, double>>> adjacency) {
  const std::size_t n = graph.size();
  double decided = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    if (partial[v] >= 0) decided += graph.unary(v);
  }
  for (const Edge& e : graph.edges()) {
    if (partial[e.u] >= 0 && partial[e.u] == partial[e.v]) decided += e.cost;
  }
  int blocks = 0;
  for (int b : partial) blocks = std::max(blocks, b + 1);
  std::vector<double> join(static_cast<std::size_t>(blocks));
  double bound = decided;
  for (std::size_t w = 0; w < n; ++w) {
    if (partial[w] != kUndecided) continue;
    std::fill(join.begin(), join.end(), 0.0);
    double loose = 0.0;
    for (const auto& [u, q] : adjacency[w]) {
      if (partial[u] >= 0) {
        join[static_cast<std::size_t>(partial[u])] += q;
      } else if (partial[u] == kUndecided) {
        loose += 0.5 * std::min(0.0, q);
      }
    }
    double best_join = 0.0;
    for (double s : join) best_join = std::min(best_join, s);
    bound += std::min(0.0, graph.unary(w) + best_join + loose);
  }
  return bound;
}

inline std::vector<std::vector<std::pair<std::size_t, double>>> symmetric_adjacency(const TrackingGraph& graph) {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(graph.size());
  for (const Edge& e : graph.edges()) {
    adj[e.u].emplace_back(e.v, e.cost);
    adj[e.v].emplace_back(e.u, e.cost);
  }
  return adj;
}

namespace detail {

class PartitionSearch {
 public:
  PartitionSearch(const TrackingGraph& graph, int max_blocks)
      : graph_(graph), max_blocks_(max_blocks), adj_(symmetric_adjacency(graph)),
        state_(graph.size(), kUndecided) {
    const std::size_t n = graph.size();
    std::vector<double> weight(n, 0.0);
    for (const Edge& e : graph.edges()) {
      weight[e.u] += std::abs(e.cost);
      weight[e.v] += std::abs(e.cost);
    }
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
  }

  ExactSolution run() {
    const std::size_t n = graph_.size();
    best_state_.assign(n, Labeling::kRejected);
    best_value_ = 0.0;
    greedy_start();
    search(0, 0, 0.0);

    ExactSolution out;
    out.labeling = Labeling(best_state_, std::max(1, max_blocks_));
    out.objective = labeling_objective(graph_, out.labeling);
    out.nodes_explored = explored_;
    return out;
  }

 private:
  // Marginal cost of putting node v into block b given the current state.
  double join_cost(std::size_t v, int b) const {
    double s = graph_.unary(v);
    for (const auto& [u, q] : adj_[v]) {
      if (state_[u] == b) s += q;
    }
    return s;
  }

  void greedy_start() {
    int blocks = 0;
    double value = 0.0;
    for (std::size_t v : order_) {
      double best = 0.0;
      int choice = Labeling::kRejected;
      for (int b = 0; b < blocks; ++b) {
        const double c = join_cost(v, b);
        if (c < best) {
          best = c;
          choice = b;
        }
      }
      if (blocks < max_blocks_ && graph_.unary(v) < best) {
        best = graph_.unary(v);
        choice = blocks;
      }
      state_[v] = choice;
      if (choice == blocks) ++blocks;
      value += best;
    }
    if (value < best_value_) {
      best_value_ = value;
      for (std::size_t v = 0; v < state_.size(); ++v) best_state_[v] = state_[v];
    }
    std::fill(state_.begin(), state_.end(), kUndecided);
  }

  void search(std::size_t depth, int blocks, double value) {
    ++explored_;
    if (depth == order_.size()) {
      if (value < best_value_) {
        best_value_ = value;
        best_state_.assign(state_.begin(), state_.end());
      }
      return;
    }
    if (partition_lower_bound(graph_, state_, adj_) >= best_value_ - 1e-12) return;

    const std::size_t v = order_[depth];
    // Options: join block b (b < blocks), open a new block, reject.
    std::vector<std::pair<double, int>> options;
    options.reserve(static_cast<std::size_t>(blocks) + 2);
    for (int b = 0; b < blocks; ++b) options.emplace_back(join_cost(v, b), b);
    if (blocks < max_blocks_) options.emplace_back(graph_.unary(v), blocks);
    options.emplace_back(0.0, Labeling::kRejected);
    std::stable_sort(options.begin(), options.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [delta, choice] : options) {
      state_[v] = choice;
      search(depth + 1, choice == blocks ? blocks + 1 : blocks, value + delta);
    }
    state_[v] = kUndecided;
  }

  const TrackingGraph& graph_;
  int max_blocks_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_;
  std::vector<std::size_t> order_;
  std::vector<int> state_;
  std::vector<int> best_state_;
  double best_value_ = 0.0;
  std::uint64_t explored_ = 0;
};

}  // namespace detail

/// Global optimum of the labeling problem with at most `max_labels` labels.
/// The objective only depends on the partition of selected nodes, so nodes
/// are branched on (reject | join an open block | open a new block).
inline ExactSolution exact_partition_solver(const TrackingGraph& graph, int max_labels) {
  if (graph.size() > kExactSolverMaxNodes) {
    throw Error("exact_partition_solver: " + std::to_string(graph.size()) + " nodes exceeds the limit of " +
                std::to_string(kExactSolverMaxNodes));
  }
  if (max_labels < 1) throw Error("exact_partition_solver: need at least one label");
  return detail::PartitionSearch(graph, max_labels).run();
}

/// Exhaustive search over all (P+1)^n labelings; for cross-checking only.
inline ExactSolution brute_force_labeling(const TrackingGraph& graph, int num_labels) {
  const std::size_t n = graph.size();
  double combos = std::pow(static_cast<double>(num_labels + 1), static_cast<double>(n));
  if (combos > 2e7) throw Error("brute_force_labeling: instance too large");
  std::vector<int> labels(n, Labeling::kRejected);
  ExactSolution best{Labeling(n, num_labels), 0.0, 0};
  while (true) {
    Labeling candidate(labels, num_labels);
    const double f = labeling_objective(graph, candidate);
    ++best.nodes_explored;
    if (f < best.objective) {
      best.objective = f;
      best.labeling = candidate;
    }
    std::size_t i = 0;
    while (i < n && labels[i] == num_labels - 1) labels[i++] = Labeling::kRejected;
    if (i == n) break;
    ++labels[i];
  }
  return best;
}

struct LineSearchResult {
  double gamma = 0.0;
  double value = 0.0;
};

/// Minimizer of Ω over the uniform grid {0, 1/(steps−1), ..., 1}.
inline LineSearchResult grid_line_search(const std::function<double(double)>& omega, int steps) {
  if (steps < 2) throw Error("grid_line_search: need at least two grid points");
  LineSearchResult best{0.0, omega(0.0)};
  for (int i = 1; i < steps; ++i) {
    const double gamma = static_cast<double>(i) / static_cast<double>(steps - 1);
    const double value = omega(gamma);
    if (value < best.value) best = {gamma, value};
  }
  return best;
}

/// Calls `visit` for every binary feasible labeling of n nodes with P labels,
/// in lexicographic order of the per-node choice (rejected < 0 < 1 < ...).
inline void for_each_vertex(std::size_t n, int num_labels, const std::function<void(const Labeling&)>& visit) {
  std::vector<int> labels(n, Labeling::kRejected);
  while (true) {
    visit(Labeling(labels, num_labels));
    std::size_t i = n;
    while (i > 0 && labels[i - 1] == num_labels - 1) labels[--i] = Labeling::kRejected;
    if (i == 0) break;
    ++labels[i - 1];
  }
}

inline double squared_distance(const RelaxedPoint& point, const Labeling& labeling) {
  double d = 0.0;
  for (std::size_t v = 0; v < point.nodes(); ++v) {
    for (int k = 0; k < point.num_labels(); ++k) {
      const double target = labeling.raw(v) == k ? 1.0 : 0.0;
      const double diff = point(v, k) - target;
      d += diff * diff;
    }
  }
  return d;
}

/// Closest binary feasible point by enumeration; ties go to the
/// lexicographically first labeling.
inline Labeling enumerate_binarize(const RelaxedPoint& point) {
  const double combos =
      std::pow(static_cast<double>(point.num_labels() + 1), static_cast<double>(point.nodes()));
  if (combos > 1e6) throw Error("enumerate_binarize: instance too large");
  Labeling best(point.nodes(), point.num_labels());
  double best_distance = std::numeric_limits<double>::infinity();
  for_each_vertex(point.nodes(), point.num_labels(), [&](const Labeling& candidate) {
    const double d = squared_distance(point, candidate);
    if (d < best_distance) {
      best_distance = d;
      best = candidate;
    }
  });
  return best;
}

/// min over all vertices a of ⟨a, gradient⟩, by enumeration.
inline double enumerate_linear_minimum(std::span<const double> gradient, std::size_t n, int num_labels) {
  const double combos = std::pow(static_cast<double>(num_labels + 1), static_cast<double>(n));
  if (combos > 1e6) throw Error("enumerate_linear_minimum: instance too large");
  double best = std::numeric_limits<double>::infinity();
  const auto P = static_cast<std::size_t>(num_labels);
  for_each_vertex(n, num_labels, [&](const Labeling& a) {
    double s = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (!a.rejected(v)) s += gradient[v * P + static_cast<std::size_t>(a.raw(v))];
    }
    best = std::min(best, s);
  });
  return best;
}

}  // namespace fwtrack
