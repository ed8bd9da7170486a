#pragma once

// Frank-Wolfe over the block-simplex polytope C(G,P) with away steps, the
// closed-form line search for the quadratic objective, nearest-point rounding
// and the decreasing regularizer schedule.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "fwtrack/error.hpp"
#include "fwtrack/graph.hpp"

namespace fwtrack {

struct SolverConfig {
  int max_iterations = 750;
  double gap_tolerance = 1e-4;
  int max_labels = 70;
  int lambda_halvings_max = 8;
  int short_run_threshold = 10;
  bool away_steps = true;
  double active_set_drop_tolerance = 1e-10;
  // The schedule also runs unregularized FW and keeps the better result.
  bool include_plain_run = true;
  // Iterations between exact gradient recomputations (the gradient is
  // otherwise updated incrementally from the step direction).
  int gradient_refresh_interval = 50;

  // Hierarchy.
  int exact_threshold = 16;
  bool reconsider_positive_rejected = false;
  int hierarchy_max_iterations = 100;

  void validate() const {
    if (max_iterations < 1) throw Error("SolverConfig: max_iterations must be positive");
    if (!(gap_tolerance > 0.0 && gap_tolerance < 1.0)) throw Error("SolverConfig: gap_tolerance must lie in (0,1)");
    if (max_labels < 1) throw Error("SolverConfig: max_labels must be positive");
    if (lambda_halvings_max < 0) throw Error("SolverConfig: lambda_halvings_max must be non-negative");
    if (short_run_threshold < 1) throw Error("SolverConfig: short_run_threshold must be positive");
    if (!(active_set_drop_tolerance > 0.0)) throw Error("SolverConfig: active_set_drop_tolerance must be positive");
    if (gradient_refresh_interval < 1) throw Error("SolverConfig: gradient_refresh_interval must be positive");
    if (exact_threshold < 1) throw Error("SolverConfig: exact_threshold must be positive");
    if (hierarchy_max_iterations < 1) throw Error("SolverConfig: hierarchy_max_iterations must be positive");
  }
};

struct TraceSample {
  double wall_seconds = 0.0;
  double best_objective = 0.0;
  double gap = 0.0;
  double lambda = 0.0;
};

struct FwResult {
  Labeling best_binary;
  double best_objective = 0.0;
  int iterations = 0;
  double final_gap = 0.0;
  double lambda = 0.0;  // regularizer of the run that produced best_binary
  int runs = 1;
  std::vector<TraceSample> trace;
};

/// Snapshot handed to an observer at the head of every iteration, before the
/// stopping test.
struct IterationView {
  int iteration = 0;
  double lambda = 0.0;
  std::span<const double> point;
  int num_labels = 1;
  double gap = 0.0;
};

using IterationObserver = std::function<void(const IterationView&)>;

/// Vertex of C(G,P) minimizing ⟨a, gradient⟩: each node independently takes
/// its most negative label, or none when every entry is non-negative.
inline Labeling linear_minimization_oracle(std::span<const double> gradient, std::size_t nodes, int num_labels) {
  if (num_labels < 1 || gradient.size() != nodes * static_cast<std::size_t>(num_labels)) {
    throw Error("linear_minimization_oracle: dimension mismatch");
  }
  const auto P = static_cast<std::size_t>(num_labels);
  Labeling vertex(nodes, num_labels);
  for (std::size_t v = 0; v < nodes; ++v) {
    const double* g = gradient.data() + v * P;
    std::size_t best = 0;
    for (std::size_t k = 1; k < P; ++k) {
      if (g[k] < g[best]) best = k;
    }
    if (g[best] < 0.0) vertex.assign(v, static_cast<int>(best));
  }
  return vertex;
}

/// argmin over γ ∈ [0,1] of Ω(γ) = Ω(0) + γ g + ½ γ² δ, with Ω(0) = omega0
/// and Ω(1) = omega1.
inline double optimal_step_size(double g, double delta, double omega0, double omega1) {
  if (std::isnan(g) || std::isnan(delta) || std::isnan(omega0) || std::isnan(omega1)) {
    throw Error("optimal_step_size: NaN input");
  }
  if (delta == 0.0) return g >= 0.0 ? 0.0 : 1.0;
  const double gamma_star = -g / delta;
  if (delta > 0.0) return std::clamp(gamma_star, 0.0, 1.0);
  // Concave: the minimum sits on an endpoint.
  if (gamma_star >= 1.0) return 0.0;
  if (gamma_star <= 0.0) return 1.0;
  return omega1 < omega0 ? 1.0 : 0.0;
}

/// Closest binary feasible point in Euclidean distance.  Blocks decouple, so
/// per node the largest entry is kept iff it exceeds one half (ties reject).
inline Labeling binarize(const RelaxedPoint& point) {
  Labeling labeling(point.nodes(), point.num_labels());
  for (std::size_t v = 0; v < point.nodes(); ++v) {
    const auto block = point.block(v);
    const auto it = std::max_element(block.begin(), block.end());
    if (*it > 0.5) labeling.assign(v, static_cast<int>(it - block.begin()));
  }
  return labeling;
}

/// √(max_v Σ_u |q_uv|): the largest absolute row sum of Q.
inline double compute_lambda0(const TrackingGraph& graph) {
  std::vector<double> row_sum(graph.size(), 0.0);
  for (const Edge& e : graph.edges()) {
    row_sum[e.u] += std::abs(e.cost);
    row_sum[e.v] += std::abs(e.cost);
  }
  double omega = 0.0;
  for (double s : row_sum) omega = std::max(omega, s);
  return std::sqrt(omega);
}

namespace detail {

struct LabelsHash {
  std::size_t operator()(const std::vector<int>& labels) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (int l : labels) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(l));
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Convex combination of polytope vertices representing the current iterate.
class ActiveSet {
 public:
  struct Atom {
    std::vector<int> labels;
    double weight;
  };

  std::vector<Atom>& atoms() { return atoms_; }
  const std::vector<Atom>& atoms() const { return atoms_; }

  /// Staircase decomposition: lay each block on [0,1] as consecutive label
  /// intervals followed by the rejection interval; every elementary segment
  /// of the merged breakpoints is one vertex weighted by its length.
  void decompose(const RelaxedPoint& point) {
    clear();
    const auto P = static_cast<std::size_t>(point.num_labels());
    std::vector<double> cuts{0.0, 1.0};
    for (std::size_t v = 0; v < point.nodes(); ++v) {
      double acc = 0.0;
      for (std::size_t k = 0; k < P; ++k) {
        acc += point(v, static_cast<int>(k));
        if (acc > 0.0 && acc < 1.0) cuts.push_back(acc);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double weight = cuts[i + 1] - cuts[i];
      if (weight <= 0.0) continue;
      const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
      std::vector<int> labels(point.nodes(), Labeling::kRejected);
      for (std::size_t v = 0; v < point.nodes(); ++v) {
        double acc = 0.0;
        for (std::size_t k = 0; k < P; ++k) {
          acc += point(v, static_cast<int>(k));
          if (mid < acc) {
            labels[v] = static_cast<int>(k);
            break;
          }
        }
      }
      add(std::move(labels), weight);
    }
  }

  void clear() {
    atoms_.clear();
    index_.clear();
  }

  void add(std::vector<int> labels, double weight) {
    auto [it, inserted] = index_.emplace(labels, atoms_.size());
    if (inserted) {
      atoms_.push_back({std::move(labels), weight});
    } else {
      atoms_[it->second].weight += weight;
    }
  }

  std::ptrdiff_t find(const std::vector<int>& labels) const {
    const auto it = index_.find(labels);
    return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
  }

  void erase(std::size_t i) {
    index_.erase(atoms_[i].labels);
    if (i + 1 != atoms_.size()) {
      atoms_[i] = std::move(atoms_.back());
      index_[atoms_[i].labels] = i;
    }
    atoms_.pop_back();
  }

  /// Drops atoms below `tolerance` and renormalizes; true if anything moved.
  bool prune(double tolerance) {
    bool changed = false;
    for (std::size_t i = atoms_.size(); i-- > 0;) {
      if (atoms_[i].weight < tolerance) {
        erase(i);
        changed = true;
      }
    }
    if (changed) {
      double total = 0.0;
      for (const auto& a : atoms_) total += a.weight;
      for (auto& a : atoms_) a.weight /= total;
    }
    return changed;
  }

  void write_point(std::span<double> x, std::size_t P) const {
    std::fill(x.begin(), x.end(), 0.0);
    for (const auto& a : atoms_) {
      for (std::size_t v = 0; v < a.labels.size(); ++v) {
        if (a.labels[v] != Labeling::kRejected) x[v * P + static_cast<std::size_t>(a.labels[v])] += a.weight;
      }
    }
  }

 private:
  std::vector<Atom> atoms_;
  std::unordered_map<std::vector<int>, std::size_t, LabelsHash> index_;
};

inline double vertex_dot(std::span<const double> g, std::span<const int> labels, std::size_t P) {
  double s = 0.0;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] != Labeling::kRejected) s += g[v * P + static_cast<std::size_t>(labels[v])];
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point origin) {
  return std::chrono::duration<double>(Clock::now() - origin).count();
}

inline FwResult run_frank_wolfe(const TrackingGraph& graph, const SolverConfig& config, const RelaxedPoint& initial,
                                double lambda_reg, const IterationObserver& observer, Clock::time_point origin) {
  config.validate();
  if (initial.nodes() != graph.size()) throw Error("solve_fw: initial point dimension mismatch");
  if (!(lambda_reg >= 0.0)) throw Error("solve_fw: lambda must be non-negative");
  if (!initial.feasible()) throw Error("solve_fw: initial point is infeasible");

  const std::size_t n = graph.size();
  const int num_labels = initial.num_labels();
  const auto P = static_cast<std::size_t>(num_labels);
  const std::size_t dim = n * P;

  std::vector<double> x(initial.values().begin(), initial.values().end());
  std::vector<double> grad(dim), direction(dim), hessian_dir(dim);
  gradient_into(graph, x, num_labels, lambda_reg, grad);

  ActiveSet active;
  if (config.away_steps) active.decompose(initial);

  FwResult result;
  result.lambda = lambda_reg;
  result.best_binary = binarize(initial);
  result.best_objective = labeling_objective(graph, result.best_binary);

  auto consider = [&](const Labeling& candidate) {
    const double f = labeling_objective(graph, candidate);
    if (f < result.best_objective) {
      result.best_objective = f;
      result.best_binary = candidate;
    }
  };

  for (int j = 0;; ++j) {
    const Labeling s = linear_minimization_oracle(grad, n, num_labels);
    const double grad_x = dot(grad, x);
    const double gap = grad_x - vertex_dot(grad, s.raw(), P);
    consider(s);

    result.iterations = j;
    result.final_gap = gap;
    result.trace.push_back({seconds_since(origin), result.best_objective, gap, lambda_reg});
    if (observer) observer({j, lambda_reg, x, num_labels, gap});
    if (gap < config.gap_tolerance || j >= config.max_iterations) break;

    // FW direction d = s − x.
    bool away = false;
    std::size_t away_index = 0;
    double max_step = 1.0;
    if (config.away_steps && active.atoms().size() > 1) {
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < active.atoms().size(); ++i) {
        const double val = vertex_dot(grad, active.atoms()[i].labels, P);
        if (val > worst) {
          worst = val;
          away_index = i;
        }
      }
      const double away_gain = worst - grad_x;
      const double alpha = active.atoms()[away_index].weight;
      if (away_gain > gap && alpha < 1.0) {
        away = true;
        max_step = alpha / (1.0 - alpha);
      }
    }

    if (away) {
      // d = x − v_away
      std::copy(x.begin(), x.end(), direction.begin());
      const auto& labels = active.atoms()[away_index].labels;
      for (std::size_t v = 0; v < n; ++v) {
        if (labels[v] != Labeling::kRejected) direction[v * P + static_cast<std::size_t>(labels[v])] -= 1.0;
      }
    } else {
      for (std::size_t i = 0; i < dim; ++i) direction[i] = -x[i];
      for (std::size_t v = 0; v < n; ++v) {
        if (!s.rejected(v)) direction[v * P + static_cast<std::size_t>(s.raw(v))] += 1.0;
      }
    }

    apply_pairwise(graph, direction, num_labels, hessian_dir);
    double sq = 0.0;
    for (double d : direction) sq += d * d;
    const double delta = dot(direction, hessian_dir) + 2.0 * lambda_reg * sq;
    const double g = dot(grad, direction);

    // Line search on the rescaled segment [0, max_step] → [0, 1].
    const double gs = g * max_step;
    const double ds = delta * max_step * max_step;
    const double t = optimal_step_size(gs, ds, 0.0, gs + 0.5 * ds);
    const double step = t * max_step;

    if (step > 0.0) {
      for (std::size_t i = 0; i < dim; ++i) x[i] = std::clamp(x[i] + step * direction[i], 0.0, 1.0);
      for (std::size_t i = 0; i < dim; ++i)
        grad[i] += step * (hessian_dir[i] + 2.0 * lambda_reg * direction[i]);
    }

    if (config.away_steps && step > 0.0) {
      auto& atoms = active.atoms();
      if (away) {
        if (t >= 1.0) {
          // Drop step: the away vertex leaves the active set.
          for (auto& a : atoms) a.weight *= (1.0 + step);
          active.erase(away_index);
          double total = 0.0;
          for (const auto& a : atoms) total += a.weight;
          for (auto& a : atoms) a.weight /= total;
        } else {
          for (auto& a : atoms) a.weight *= (1.0 + step);
          atoms[away_index].weight -= step;
        }
      } else if (step >= 1.0) {
        active.clear();
        active.add(std::vector<int>(s.raw().begin(), s.raw().end()), 1.0);
      } else {
        for (auto& a : atoms) a.weight *= (1.0 - step);
        active.add(std::vector<int>(s.raw().begin(), s.raw().end()), step);
      }
      if (active.prune(config.active_set_drop_tolerance)) {
        active.write_point(x, P);
        gradient_into(graph, x, num_labels, lambda_reg, grad);
      }
    }

    if ((j + 1) % config.gradient_refresh_interval == 0) gradient_into(graph, x, num_labels, lambda_reg, grad);

    consider(binarize(RelaxedPoint(n, num_labels, x)));
  }
  return result;
}

}  // namespace detail

/// One Frank-Wolfe run on f_λ from `initial`.
inline FwResult solve_fw(const TrackingGraph& graph, const SolverConfig& config, const RelaxedPoint& initial,
                         double lambda_reg, const IterationObserver& observer = {}) {
  return detail::run_frank_wolfe(graph, config, initial, lambda_reg, observer, detail::Clock::now());
}

/// FW+λ: start at λ₀ and halve λ while runs end in fewer than
/// `short_run_threshold` iterations; every run starts from the zero point.
/// Returns the run with the lowest f_G; the trace spans all runs.
inline FwResult solve_with_schedule(const TrackingGraph& graph, const SolverConfig& config,
                                    const IterationObserver& observer = {}) {
  config.validate();
  const auto origin = detail::Clock::now();
  const RelaxedPoint zero(graph.size(), config.max_labels);

  std::vector<FwResult> runs;
  const double lambda0 = compute_lambda0(graph);
  double lambda = lambda0;
  for (int halvings = 0;; ++halvings) {
    runs.push_back(detail::run_frank_wolfe(graph, config, zero, lambda, observer, origin));
    if (lambda == 0.0 || runs.back().iterations >= config.short_run_threshold ||
        halvings >= config.lambda_halvings_max) {
      break;
    }
    lambda *= 0.5;
  }
  if (config.include_plain_run && lambda0 > 0.0) {
    runs.push_back(detail::run_frank_wolfe(graph, config, zero, 0.0, observer, origin));
  }

  // Concatenated trace; best_objective is the running best across runs.
  std::vector<TraceSample> trace;
  double running_best = std::numeric_limits<double>::infinity();
  for (const auto& run : runs) {
    for (TraceSample sample : run.trace) {
      running_best = std::min(running_best, sample.best_objective);
      sample.best_objective = running_best;
      trace.push_back(sample);
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].best_objective < runs[best].best_objective) best = i;
  }
  FwResult out = std::move(runs[best]);
  out.runs = static_cast<int>(runs.size());
  out.trace = std::move(trace);
  return out;
}

}  // namespace fwtrack
