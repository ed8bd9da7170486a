#pragma once

// Labeling problem over a detection graph: every node takes at most one of P
// labels; the cost of a labeling is the sum of unary costs of labeled nodes
// plus the pairwise costs of every pair sharing a label.  The quadratic
// matrix of the relaxed problem is block-diagonal with P identical copies of
// the pairwise matrix, so only the strict upper triangle of that matrix is
// ever stored.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fwtrack/error.hpp"

namespace fwtrack {

inline constexpr double kProbabilityFloor = 1e-6;
inline constexpr double kFeasibilityTolerance = 1e-12;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

enum class DetectorKind { head, body };

inline const char* to_string(DetectorKind kind) {
  return kind == DetectorKind::head ? "head" : "body";
}

struct Box {
  double x = 0.0;  // top-left corner, image coordinates (y grows downwards)
  double y = 0.0;
  double width = 1.0;
  double height = 1.0;

  double center_x() const { return x + 0.5 * width; }
  double center_y() const { return y + 0.5 * height; }
  double area() const { return width * height; }
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x + a.width, b.x + b.width) - std::max(a.x, b.x);
  const double h = std::min(a.y + a.height, b.y + b.height) - std::max(a.y, b.y);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct Detection {
  int id = 0;
  int frame = 0;
  Box box;
  DetectorKind kind = DetectorKind::body;
  double probability = 0.5;
};

/// Strict upper-triangle entry of the pairwise matrix (u < v).
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  double cost = 0.0;
};

class TrackingGraph {
 public:
  static constexpr int kUnboundedWindow = -1;

  TrackingGraph() = default;

  /// Edges may be given in any orientation and order; zero costs are dropped.
  /// Duplicated pairs, self-edges, out-of-range indices and edges spanning
  /// more than `temporal_window` frames are rejected.
  TrackingGraph(std::vector<Detection> nodes, std::vector<double> unary_costs,
                std::vector<Edge> edges, int temporal_window = kUnboundedWindow)
      : nodes_(std::move(nodes)),
        unary_(std::move(unary_costs)),
        temporal_window_(temporal_window) {
    if (nodes_.size() != unary_.size()) {
      throw Error("TrackingGraph: node count and unary cost count differ");
    }
    for (double c : unary_) {
      if (!std::isfinite(c)) throw Error("TrackingGraph: non-finite unary cost");
    }
    build_rows(std::move(edges));
  }

  /// Graph without detection payload (used for contracted graphs and
  /// synthetic instances); node i gets id i and frame 0.
  static TrackingGraph from_costs(std::vector<double> unary_costs, std::vector<Edge> edges) {
    std::vector<Detection> nodes(unary_costs.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i].id = static_cast<int>(i);
    return TrackingGraph(std::move(nodes), std::move(unary_costs), std::move(edges));
  }

  std::size_t size() const { return unary_.size(); }
  bool empty() const { return unary_.empty(); }
  int temporal_window() const { return temporal_window_; }

  std::span<const Detection> nodes() const { return nodes_; }
  const Detection& node(std::size_t v) const { return nodes_.at(v); }
  std::span<const double> unary_costs() const { return unary_; }
  double unary(std::size_t v) const { return unary_[v]; }

  /// All stored entries, row-major over u, with v ascending inside a row.
  std::span<const Edge> edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  /// Upper-triangle entries whose smaller endpoint is `u`.
  std::span<const Edge> row(std::size_t u) const {
    return std::span<const Edge>(edges_).subspan(row_begin_[u], row_begin_[u + 1] - row_begin_[u]);
  }

  /// q_uv for any ordered pair; 0 for absent pairs.
  double pairwise(std::size_t u, std::size_t v) const {
    if (u == v) return 0.0;
    if (u > v) std::swap(u, v);
    const auto r = row(u);
    const auto it = std::lower_bound(r.begin(), r.end(), v,
                                     [](const Edge& e, std::size_t key) { return e.v < key; });
    return (it != r.end() && it->v == v) ? it->cost : 0.0;
  }

 private:
  void build_rows(std::vector<Edge> edges) {
    const std::size_t n = unary_.size();
    for (auto& e : edges) {
      if (e.u == e.v) throw Error("TrackingGraph: self-edge on node " + std::to_string(e.u));
      if (e.u >= n || e.v >= n) throw Error("TrackingGraph: edge endpoint out of range");
      if (!std::isfinite(e.cost)) throw Error("TrackingGraph: non-finite pairwise cost");
      if (e.u > e.v) std::swap(e.u, e.v);
      if (temporal_window_ >= 0 &&
          std::abs(nodes_[e.u].frame - nodes_[e.v].frame) > temporal_window_ && e.cost != 0.0) {
        throw Error("TrackingGraph: edge spans more than the temporal window");
      }
    }
    std::erase_if(edges, [](const Edge& e) { return e.cost == 0.0; });
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    for (std::size_t i = 1; i < edges.size(); ++i) {
      if (edges[i].u == edges[i - 1].u && edges[i].v == edges[i - 1].v) {
        throw Error("TrackingGraph: duplicated edge (" + std::to_string(edges[i].u) + ", " +
                    std::to_string(edges[i].v) + ")");
      }
    }
    edges_ = std::move(edges);
    row_begin_.assign(n + 1, 0);
    for (const auto& e : edges_) ++row_begin_[e.u + 1];
    for (std::size_t i = 0; i < n; ++i) row_begin_[i + 1] += row_begin_[i];
  }

  std::vector<Detection> nodes_;
  std::vector<double> unary_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> row_begin_{0};
  int temporal_window_ = kUnboundedWindow;
};

/// Assignment of every node to at most one of `num_labels` labels.
class Labeling {
 public:
  static constexpr int kRejected = -1;

  Labeling() = default;
  Labeling(std::size_t nodes, int num_labels) : num_labels_(num_labels), labels_(nodes, kRejected) {
    if (num_labels < 1) throw Error("Labeling: need at least one label");
  }
  Labeling(std::vector<int> labels, int num_labels) : num_labels_(num_labels), labels_(std::move(labels)) {
    if (num_labels < 1) throw Error("Labeling: need at least one label");
    for (int l : labels_) {
      if (l != kRejected && (l < 0 || l >= num_labels_)) throw Error("Labeling: label out of range");
    }
  }

  std::size_t size() const { return labels_.size(); }
  int num_labels() const { return num_labels_; }

  std::optional<int> label(std::size_t v) const {
    return labels_[v] == kRejected ? std::nullopt : std::optional<int>(labels_[v]);
  }
  bool rejected(std::size_t v) const { return labels_[v] == kRejected; }
  int raw(std::size_t v) const { return labels_[v]; }
  std::span<const int> raw() const { return labels_; }

  void assign(std::size_t v, int label) {
    if (label < 0 || label >= num_labels_) throw Error("Labeling: label out of range");
    labels_[v] = label;
  }
  void reject(std::size_t v) { labels_[v] = kRejected; }

  std::size_t used_label_count() const {
    std::vector<char> seen(static_cast<std::size_t>(num_labels_), 0);
    std::size_t count = 0;
    for (int l : labels_) {
      if (l != kRejected && !seen[static_cast<std::size_t>(l)]) {
        seen[static_cast<std::size_t>(l)] = 1;
        ++count;
      }
    }
    return count;
  }

  friend bool operator==(const Labeling&, const Labeling&) = default;

 private:
  int num_labels_ = 1;
  std::vector<int> labels_;
};

/// Point of the relaxed polytope: n blocks of P values in [0,1], each block
/// summing to at most one.
class RelaxedPoint {
 public:
  RelaxedPoint() = default;
  RelaxedPoint(std::size_t nodes, int num_labels)
      : nodes_(nodes), num_labels_(num_labels), values_(nodes * static_cast<std::size_t>(num_labels), 0.0) {
    if (num_labels < 1) throw Error("RelaxedPoint: need at least one label");
  }
  RelaxedPoint(std::size_t nodes, int num_labels, std::vector<double> values)
      : nodes_(nodes), num_labels_(num_labels), values_(std::move(values)) {
    if (num_labels < 1) throw Error("RelaxedPoint: need at least one label");
    if (values_.size() != nodes * static_cast<std::size_t>(num_labels)) {
      throw Error("RelaxedPoint: value count is not nodes * labels");
    }
  }

  std::size_t nodes() const { return nodes_; }
  int num_labels() const { return num_labels_; }
  std::size_t dimension() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator()(std::size_t v, int k) const { return values_[v * stride() + static_cast<std::size_t>(k)]; }
  double& operator()(std::size_t v, int k) { return values_[v * stride() + static_cast<std::size_t>(k)]; }
  std::span<const double> block(std::size_t v) const {
    return std::span<const double>(values_).subspan(v * stride(), stride());
  }

  /// Largest violation of the box and block-sum constraints (0 when feasible).
  double infeasibility() const {
    double worst = 0.0;
    for (std::size_t v = 0; v < nodes_; ++v) {
      double sum = 0.0;
      for (double x : block(v)) {
        worst = std::max({worst, -x, x - 1.0});
        sum += x;
      }
      worst = std::max(worst, sum - 1.0);
    }
    return worst;
  }
  bool feasible(double tolerance = kFeasibilityTolerance) const { return infeasibility() <= tolerance; }

 private:
  std::size_t stride() const { return static_cast<std::size_t>(num_labels_); }

  std::size_t nodes_ = 0;
  int num_labels_ = 1;
  std::vector<double> values_;
};

namespace detail {

inline void check_dimension(const TrackingGraph& graph, std::size_t dimension, int num_labels,
                            const char* what) {
  if (num_labels < 1 || dimension != graph.size() * static_cast<std::size_t>(num_labels)) {
    throw Error(std::string(what) + ": dimension mismatch (got " + std::to_string(dimension) +
                ", graph has " + std::to_string(graph.size()) + " nodes)");
  }
}

/// out = Q_blockdiag * x, pairwise part only (the diagonal of Q is zero).
inline void apply_pairwise(const TrackingGraph& graph, std::span<const double> x, int num_labels,
                           std::span<double> out) {
  const auto P = static_cast<std::size_t>(num_labels);
  std::fill(out.begin(), out.end(), 0.0);
  for (const Edge& e : graph.edges()) {
    const double* xu = x.data() + e.u * P;
    const double* xv = x.data() + e.v * P;
    double* ou = out.data() + e.u * P;
    double* ov = out.data() + e.v * P;
    const double q = e.cost;
    for (std::size_t k = 0; k < P; ++k) {
      ou[k] += q * xv[k];
      ov[k] += q * xu[k];
    }
  }
}

}  // namespace detail

/// f_G(x) = Σ c_v x_v^k + Σ_{u<v} q_uv Σ_k x_u^k x_v^k.  Summation order
/// matches `labeling_objective`, so both agree bit-for-bit on binary points.
inline double objective(const TrackingGraph& graph, std::span<const double> x, int num_labels) {
  detail::check_dimension(graph, x.size(), num_labels, "objective");
  const auto P = static_cast<std::size_t>(num_labels);
  double total = 0.0;
  for (std::size_t v = 0; v < graph.size(); ++v) {
    double mass = 0.0;
    for (std::size_t k = 0; k < P; ++k) mass += x[v * P + k];
    if (mass != 0.0) total += graph.unary(v) * mass;
  }
  for (const Edge& e : graph.edges()) {
    double overlap = 0.0;
    for (std::size_t k = 0; k < P; ++k) overlap += x[e.u * P + k] * x[e.v * P + k];
    if (overlap != 0.0) total += e.cost * overlap;
  }
  return total;
}

inline double objective(const TrackingGraph& graph, const RelaxedPoint& point) {
  return objective(graph, point.values(), point.num_labels());
}

/// f_λ(x) = f_G(x) + λ Σ (x_i² − x_i).
inline double regularized_objective(const TrackingGraph& graph, std::span<const double> x, int num_labels,
                                    double lambda_reg) {
  const double base = objective(graph, x, num_labels);
  if (lambda_reg == 0.0) return base;
  double reg = 0.0;
  for (double xi : x) reg += xi * xi - xi;
  return base + lambda_reg * reg;
}

inline double regularized_objective(const TrackingGraph& graph, const RelaxedPoint& point, double lambda_reg) {
  return regularized_objective(graph, point.values(), point.num_labels(), lambda_reg);
}

/// f_G of a discrete labeling, O(n + nnz).
inline double labeling_objective(const TrackingGraph& graph, const Labeling& labeling) {
  if (labeling.size() != graph.size()) throw Error("labeling_objective: dimension mismatch");
  double total = 0.0;
  for (std::size_t v = 0; v < graph.size(); ++v) {
    if (!labeling.rejected(v)) total += graph.unary(v);
  }
  for (const Edge& e : graph.edges()) {
    const int lu = labeling.raw(e.u);
    if (lu != Labeling::kRejected && lu == labeling.raw(e.v)) total += e.cost;
  }
  return total;
}

/// ∇f_λ(x): component (v,k) is c_v + Σ_u q_uv x_u^k + λ(2 x_v^k − 1).
inline void gradient_into(const TrackingGraph& graph, std::span<const double> x, int num_labels,
                          double lambda_reg, std::span<double> out) {
  detail::check_dimension(graph, x.size(), num_labels, "gradient");
  if (out.size() != x.size()) throw Error("gradient: output dimension mismatch");
  detail::apply_pairwise(graph, x, num_labels, out);
  const auto P = static_cast<std::size_t>(num_labels);
  for (std::size_t v = 0; v < graph.size(); ++v) {
    const double c = graph.unary(v);
    for (std::size_t k = 0; k < P; ++k) {
      const std::size_t i = v * P + k;
      out[i] += c + lambda_reg * (2.0 * x[i] - 1.0);
    }
  }
}

inline std::vector<double> gradient(const TrackingGraph& graph, const RelaxedPoint& point, double lambda_reg) {
  std::vector<double> out(point.dimension());
  gradient_into(graph, point.values(), point.num_labels(), lambda_reg, out);
  return out;
}

/// dᵀ(Q + 2λI)d by sparse traversal.
inline double quadratic_form(const TrackingGraph& graph, std::span<const double> d, int num_labels,
                             double lambda_reg) {
  detail::check_dimension(graph, d.size(), num_labels, "quadratic_form");
  const auto P = static_cast<std::size_t>(num_labels);
  double total = 0.0;
  for (const Edge& e : graph.edges()) {
    double overlap = 0.0;
    for (std::size_t k = 0; k < P; ++k) overlap += d[e.u * P + k] * d[e.v * P + k];
    total += 2.0 * e.cost * overlap;
  }
  if (lambda_reg != 0.0) {
    double sq = 0.0;
    for (double di : d) sq += di * di;
    total += 2.0 * lambda_reg * sq;
  }
  return total;
}

inline RelaxedPoint labeling_to_point(const Labeling& labeling) {
  RelaxedPoint point(labeling.size(), labeling.num_labels());
  for (std::size_t v = 0; v < labeling.size(); ++v) {
    if (auto l = labeling.label(v)) point(v, *l) = 1.0;
  }
  return point;
}

inline Labeling point_to_labeling(const RelaxedPoint& point) {
  Labeling labeling(point.nodes(), point.num_labels());
  for (std::size_t v = 0; v < point.nodes(); ++v) {
    int chosen = Labeling::kRejected;
    for (int k = 0; k < point.num_labels(); ++k) {
      const double x = point(v, k);
      if (x == 0.0) continue;
      if (x != 1.0) throw Error("point_to_labeling: entry is not binary at node " + std::to_string(v));
      if (chosen != Labeling::kRejected) {
        throw Error("point_to_labeling: node " + std::to_string(v) + " carries two labels");
      }
      chosen = k;
    }
    if (chosen != Labeling::kRejected) labeling.assign(v, chosen);
  }
  return labeling;
}

// Plain-text instance format:
//   node <id> <frame> <unary>
//   edge <id_u> <id_v> <pairwise>
// Blank lines and lines starting with '#' are ignored.

inline void write_instance(std::ostream& os, const TrackingGraph& graph) {
  const auto old_precision = os.precision(17);
  os << "# fwtrack instance: " << graph.size() << " nodes, " << graph.edge_count() << " edges\n";
  for (std::size_t v = 0; v < graph.size(); ++v) {
    os << "node " << graph.node(v).id << ' ' << graph.node(v).frame << ' ' << graph.unary(v) << '\n';
  }
  for (const Edge& e : graph.edges()) {
    os << "edge " << graph.node(e.u).id << ' ' << graph.node(e.v).id << ' ' << e.cost << '\n';
  }
  os.precision(old_precision);
}

inline TrackingGraph read_instance(std::istream& is) {
  std::vector<Detection> nodes;
  std::vector<double> unary;
  std::vector<Edge> edges;
  std::map<int, std::size_t> index_of;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    auto fail = [&](const std::string& why) {
      throw Error("instance line " + std::to_string(line_no) + ": " + why);
    };
    if (tag == "node") {
      Detection d;
      double c = 0.0;
      if (!(ls >> d.id >> d.frame >> c)) fail("expected 'node <id> <frame> <unary>'");
      if (!index_of.emplace(d.id, nodes.size()).second) fail("duplicated node id");
      nodes.push_back(d);
      unary.push_back(c);
    } else if (tag == "edge") {
      int a = 0, b = 0;
      double q = 0.0;
      if (!(ls >> a >> b >> q)) fail("expected 'edge <u> <v> <pairwise>'");
      const auto ia = index_of.find(a), ib = index_of.find(b);
      if (ia == index_of.end() || ib == index_of.end()) fail("edge references an unknown node");
      edges.push_back({ia->second, ib->second, q});
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  return TrackingGraph(std::move(nodes), std::move(unary), std::move(edges));
}

}  // namespace fwtrack
