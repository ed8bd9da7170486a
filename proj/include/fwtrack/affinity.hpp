#pragma once

// Head/full-body affinity model: scale-free relative positioning through
// barycentric coordinates, spatial and temporal features, logistic
// regression, and mapping of probabilities onto logit costs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fwtrack/error.hpp"
#include "fwtrack/graph.hpp"

namespace fwtrack {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Corners used for barycentric coordinates: lower-left, upper-left, upper-right.
struct CornerTriangle {
  Point2 lower_left;
  Point2 upper_left;
  Point2 upper_right;
};

/// Image boxes have y pointing down, so the lower edge sits at y + height.
inline CornerTriangle corners(const Box& box) {
  return {{box.x, box.y + box.height}, {box.x, box.y}, {box.x + box.width, box.y}};
}

/// Reference box in its own coordinate frame (y up, lower-left at origin).
struct StandardBox {
  double width = 50.0;
  double height = 120.0;

  CornerTriangle corners() const { return {{0.0, 0.0}, {0.0, height}, {width, height}}; }
  Point2 center() const { return {0.5 * width, 0.5 * height}; }
};

using Barycentric = std::array<double, 3>;

inline Barycentric barycentric(Point2 p, const CornerTriangle& t) {
  const double ax = t.upper_left.x - t.lower_left.x, ay = t.upper_left.y - t.lower_left.y;
  const double bx = t.upper_right.x - t.lower_left.x, by = t.upper_right.y - t.lower_left.y;
  const double det = ax * by - ay * bx;
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw Error("barycentric: degenerate corner triangle");
  const double px = p.x - t.lower_left.x, py = p.y - t.lower_left.y;
  const double l2 = (px * by - py * bx) / det;
  const double l3 = (ax * py - ay * px) / det;
  return {1.0 - l2 - l3, l2, l3};
}

inline Barycentric barycentric(Point2 p, const Box& box) {
  if (!(box.width > 0.0 && box.height > 0.0)) throw Error("barycentric: degenerate box");
  return barycentric(p, corners(box));
}

inline Point2 from_barycentric(const Barycentric& l, const CornerTriangle& t) {
  return {l[0] * t.lower_left.x + l[1] * t.upper_left.x + l[2] * t.upper_right.x,
          l[0] * t.lower_left.y + l[1] * t.upper_left.y + l[2] * t.upper_right.y};
}

/// Maps an image pixel to the standard box, keeping its position relative to `box`.
inline Point2 map_to_standard(Point2 pixel, const Box& box, const StandardBox& std_box = {}) {
  return from_barycentric(barycentric(pixel, box), std_box.corners());
}

struct SpatialPrior {
  Point2 expected_head{12.5, 112.0};  // m_h in standard-box coordinates
};

struct RatioPrior {
  double width_ratio = 0.35;   // mean head width / body width
  double height_ratio = 0.16;  // mean head height / body height
};

struct Priors {
  StandardBox standard_box;
  SpatialPrior spatial;
  RatioPrior ratio;
};

/// Head center mirrored into the left half of the body box.
inline Point2 mirrored_head_position(const Detection& head, const Detection& body) {
  Point2 p{head.box.center_x(), head.box.center_y()};
  const double axis = body.box.center_x();
  if (p.x > axis) p.x = 2.0 * axis - p.x;
  return p;
}

struct SpatialFeatures {
  double distance = 0.0;
  double angle = 0.0;
};

/// Distance from the expected head position and angle between the rays from
/// the standard-box center to the expected and the observed position.
inline SpatialFeatures spatial_head_body_features(const Detection& head, const Detection& body,
                                                  const SpatialPrior& prior, const StandardBox& std_box = {}) {
  if (head.kind != DetectorKind::head || body.kind != DetectorKind::body) {
    throw Error("spatial_head_body_features: expected a (head, body) pair");
  }
  if (!(head.box.width > 0.0 && head.box.height > 0.0)) throw Error("spatial_head_body_features: degenerate head box");
  const Point2 p = map_to_standard(mirrored_head_position(head, body), body.box, std_box);
  const Point2 m = prior.expected_head;
  const Point2 c = std_box.center();
  SpatialFeatures f;
  f.distance = std::hypot(p.x - m.x, p.y - m.y);
  const double ax = m.x - c.x, ay = m.y - c.y, bx = p.x - c.x, by = p.y - c.y;
  if (std::hypot(bx, by) > 0.0 && std::hypot(ax, ay) > 0.0) {
    f.angle = std::abs(std::atan2(ax * by - ay * bx, ax * bx + ay * by));
  }
  return f;
}

/// Correspondence ratios between two detections in different frames.  Same
/// kind: (co/dm_u, co/dm_v, co/mean(dm)).  Head/body: co/dm of the head.
inline std::vector<double> temporal_features(const Detection& u, const Detection& v, double co, double dm_u,
                                             double dm_v) {
  if (co < 0.0 || dm_u < 0.0 || dm_v < 0.0) throw Error("temporal_features: negative count");
  if (!(dm_u > 0.0 && dm_v > 0.0)) throw Error("temporal_features: sample counts must be positive");
  if (co > std::min(dm_u, dm_v)) throw Error("temporal_features: more correspondences than samples");
  if (u.kind == v.kind) return {co / dm_u, co / dm_v, co / (0.5 * (dm_u + dm_v))};
  return {u.kind == DetectorKind::head ? co / dm_u : co / dm_v};
}

struct RatioFeatures {
  double width = 0.0;
  double height = 0.0;
};

inline RatioFeatures ratio_features(const Detection& head, const Detection& body, const RatioPrior& prior) {
  if (!(body.box.width > 0.0 && body.box.height > 0.0)) throw Error("ratio_features: zero body size");
  return {std::abs(prior.width_ratio - head.box.width / body.box.width),
          std::abs(prior.height_ratio - head.box.height / body.box.height)};
}

/// Priors estimated from annotated (head, body) pairs of the same person.
inline Priors learn_priors(std::span<const std::pair<Detection, Detection>> pairs, const StandardBox& std_box = {}) {
  if (pairs.empty()) throw Error("learn_priors: no annotated pairs");
  Priors priors;
  priors.standard_box = std_box;
  double mx = 0.0, my = 0.0, rw = 0.0, rh = 0.0;
  for (const auto& [head, body] : pairs) {
    const Point2 p = map_to_standard(mirrored_head_position(head, body), body.box, std_box);
    mx += p.x;
    my += p.y;
    rw += head.box.width / body.box.width;
    rh += head.box.height / body.box.height;
  }
  const double n = static_cast<double>(pairs.size());
  priors.spatial.expected_head = {mx / n, my / n};
  priors.ratio = {rw / n, rh / n};
  return priors;
}

// ---------------------------------------------------------------------------
// Logistic regression

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;

  double predict(std::span<const double> features) const {
    if (features.size() != weights.size()) throw Error("LogisticModel: feature dimension mismatch");
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * features[i];
    return sigmoid(z);
  }
};

struct LogisticFitOptions {
  double l2 = 1e-4;
  double gradient_tolerance = 1e-6;
  int max_steps = 10000;
};

struct LogisticFit {
  LogisticModel model;
  std::vector<double> loss_history;  // regularized mean NLL per accepted step
  int steps = 0;
};

/// Gradient descent with backtracking on the mean negative log-likelihood plus
/// ½·l2·‖w‖² (bias unpenalized).  Features are standardized internally and
/// the weights mapped back, so the returned model acts on raw features.
inline LogisticFit fit_logistic(std::span<const std::vector<double>> samples, std::span<const int> labels,
                                const LogisticFitOptions& options = {}) {
  if (samples.size() != labels.size()) throw Error("fit_logistic: sample/label count mismatch");
  if (samples.empty()) throw Error("fit_logistic: no samples");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("fit_logistic: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == labels.size()) throw Error("fit_logistic: need samples of both classes");
  const std::size_t d = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != d) throw Error("fit_logistic: inconsistent feature dimension");
  }

  const double m = static_cast<double>(samples.size());
  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  for (const auto& s : samples) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += s[j] / m;
  }
  for (std::size_t j = 0; j < d; ++j) {
    double var = 0.0;
    for (const auto& s : samples) var += (s[j] - mean[j]) * (s[j] - mean[j]) / m;
    scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  std::vector<std::vector<double>> z(samples.size(), std::vector<double>(d));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i][j] = (samples[i][j] - mean[j]) / scale[j];
  }

  // Params: w (standardized space) then bias.
  std::vector<double> theta(d + 1, 0.0), grad(d + 1), trial(d + 1);
  auto loss_and_grad = [&](const std::vector<double>& t, std::vector<double>* g) {
    double loss = 0.0;
    if (g) std::fill(g->begin(), g->end(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      double a = t[d];
      for (std::size_t j = 0; j < d; ++j) a += t[j] * z[i][j];
      // log(1 + e^a) − y·a, computed stably.
      const double softplus = a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
      loss += softplus - labels[i] * a;
      if (g) {
        const double r = sigmoid(a) - labels[i];
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += r * z[i][j];
        (*g)[d] += r;
      }
    }
    loss /= m;
    double reg = 0.0;
    for (std::size_t j = 0; j < d; ++j) reg += t[j] * t[j];
    loss += 0.5 * options.l2 * reg;
    if (g) {
      for (auto& gj : *g) gj /= m;
      for (std::size_t j = 0; j < d; ++j) (*g)[j] += options.l2 * t[j];
    }
    return loss;
  };

  LogisticFit fit;
  double loss = loss_and_grad(theta, &grad);
  fit.loss_history.push_back(loss);
  double step = 1.0;
  for (int it = 0; it < options.max_steps; ++it) {
    double gnorm2 = 0.0;
    for (double gj : grad) gnorm2 += gj * gj;
    if (std::sqrt(gnorm2) < options.gradient_tolerance) break;
    step = std::min(step * 2.0, 64.0);
    double next = loss;
    while (step > 1e-16) {
      for (std::size_t j = 0; j <= d; ++j) trial[j] = theta[j] - step * grad[j];
      next = loss_and_grad(trial, nullptr);
      if (next <= loss - 0.5 * step * gnorm2) break;
      step *= 0.5;
    }
    if (!(next <= loss)) break;
    theta = trial;
    loss = loss_and_grad(theta, &grad);
    fit.loss_history.push_back(loss);
    fit.steps = it + 1;
  }

  fit.model.weights.resize(d);
  fit.model.bias = theta[d];
  for (std::size_t j = 0; j < d; ++j) {
    fit.model.weights[j] = theta[j] / scale[j];
    fit.model.bias -= theta[j] * mean[j] / scale[j];
  }
  return fit;
}

/// log((1−p)/p) after clamping p into [10⁻⁶, 1−10⁻⁶].
inline double probability_to_cost(double p) {
  const double c = clamp_probability(p);
  return std::log((1.0 - c) / c);
}

// ---------------------------------------------------------------------------
// Cost families and the graph builder

enum class CostFamily { spatial, temporal_same, temporal_mixed };

inline const char* to_string(CostFamily f) {
  switch (f) {
    case CostFamily::spatial: return "spatial";
    case CostFamily::temporal_same: return "temporal_same";
    case CostFamily::temporal_mixed: return "temporal_mixed";
  }
  return "?";
}

inline CostFamily parse_cost_family(const std::string& s) {
  if (s == "spatial") return CostFamily::spatial;
  if (s == "temporal_same") return CostFamily::temporal_same;
  if (s == "temporal_mixed") return CostFamily::temporal_mixed;
  throw Error("unknown cost family '" + s + "'");
}

/// Feature counts: spatial (distance, angle, Δw, Δh); temporal same-kind
/// (three ratios); temporal head/body (head ratio, Δw, Δh).
inline std::size_t feature_count(CostFamily f) {
  switch (f) {
    case CostFamily::spatial: return 4;
    case CostFamily::temporal_same: return 3;
    case CostFamily::temporal_mixed: return 3;
  }
  return 0;
}

struct AffinityModel {
  LogisticModel spatial;
  LogisticModel temporal_same;
  LogisticModel temporal_mixed;

  LogisticModel& family(CostFamily f) {
    return f == CostFamily::spatial ? spatial : f == CostFamily::temporal_same ? temporal_same : temporal_mixed;
  }
  const LogisticModel& family(CostFamily f) const {
    return f == CostFamily::spatial ? spatial : f == CostFamily::temporal_same ? temporal_same : temporal_mixed;
  }
};

// Key-value text files: "<key> <value...>" per line, '#' comments.

inline std::map<std::string, std::vector<double>> read_key_values(std::istream& is, const std::string& what) {
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    std::vector<double> values;
    double x = 0.0;
    while (ls >> x) values.push_back(x);
    if (!ls.eof()) throw Error(what + " line " + std::to_string(line_no) + ": malformed value");
    out[key] = std::move(values);
  }
  return out;
}

inline void write_model(std::ostream& os, const AffinityModel& model) {
  const auto old = os.precision(17);
  for (CostFamily f : {CostFamily::spatial, CostFamily::temporal_same, CostFamily::temporal_mixed}) {
    const auto& m = model.family(f);
    os << to_string(f) << ".bias " << m.bias << '\n';
    os << to_string(f) << ".weights";
    for (double w : m.weights) os << ' ' << w;
    os << '\n';
  }
  os.precision(old);
}

inline AffinityModel read_model(std::istream& is) {
  const auto kv = read_key_values(is, "model");
  AffinityModel model;
  for (CostFamily f : {CostFamily::spatial, CostFamily::temporal_same, CostFamily::temporal_mixed}) {
    const std::string name = to_string(f);
    const auto b = kv.find(name + ".bias");
    const auto w = kv.find(name + ".weights");
    if (b == kv.end() || b->second.size() != 1) throw Error("model: missing " + name + ".bias");
    if (w == kv.end() || w->second.size() != feature_count(f)) {
      throw Error("model: " + name + ".weights needs " + std::to_string(feature_count(f)) + " values");
    }
    auto& m = model.family(f);
    m.bias = b->second[0];
    m.weights = w->second;
    for (double x : m.weights) {
      if (!std::isfinite(x)) throw Error("model: non-finite weight");
    }
  }
  return model;
}

inline void write_priors(std::ostream& os, const Priors& p) {
  const auto old = os.precision(17);
  os << "standard_box " << p.standard_box.width << ' ' << p.standard_box.height << '\n';
  os << "expected_head " << p.spatial.expected_head.x << ' ' << p.spatial.expected_head.y << '\n';
  os << "width_ratio " << p.ratio.width_ratio << '\n';
  os << "height_ratio " << p.ratio.height_ratio << '\n';
  os.precision(old);
}

inline Priors read_priors(std::istream& is) {
  const auto kv = read_key_values(is, "priors");
  auto get = [&](const std::string& key, std::size_t count) -> const std::vector<double>& {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.size() != count) throw Error("priors: missing or malformed '" + key + "'");
    return it->second;
  };
  Priors p;
  const auto& sb = get("standard_box", 2);
  p.standard_box = {sb[0], sb[1]};
  const auto& mh = get("expected_head", 2);
  p.spatial.expected_head = {mh[0], mh[1]};
  p.ratio.width_ratio = get("width_ratio", 1)[0];
  p.ratio.height_ratio = get("height_ratio", 1)[0];
  if (!(p.standard_box.width > 0.0 && p.standard_box.height > 0.0)) throw Error("priors: degenerate standard box");
  if (!(p.ratio.width_ratio > 0.0 && p.ratio.width_ratio < 1.0 && p.ratio.height_ratio > 0.0 &&
        p.ratio.height_ratio < 1.0)) {
    throw Error("priors: ratios must lie in (0,1)");
  }
  return p;
}

struct Correspondence {
  int frame_a = 0;
  int id_a = 0;
  int frame_b = 0;
  int id_b = 0;
  double co = 0.0;
  double dm_a = 0.0;
  double dm_b = 0.0;
};

/// Correspondence counts keyed by the unordered pair of (frame, id) detections.
class CorrespondenceTable {
 public:
  struct Counts {
    double co = 0.0;
    double dm_first = 0.0;   // sample count of the first detection asked for
    double dm_second = 0.0;
  };

  CorrespondenceTable() = default;
  explicit CorrespondenceTable(std::span<const Correspondence> rows) {
    for (const auto& r : rows) insert(r);
  }

  void insert(const Correspondence& r) {
    if (key(r.frame_a, r.id_a) < key(r.frame_b, r.id_b)) {
      table_[{key(r.frame_a, r.id_a), key(r.frame_b, r.id_b)}] = {r.co, r.dm_a, r.dm_b};
    } else {
      table_[{key(r.frame_b, r.id_b), key(r.frame_a, r.id_a)}] = {r.co, r.dm_b, r.dm_a};
    }
  }

  std::optional<Counts> find(const Detection& a, const Detection& b) const {
    const auto ka = key(a.frame, a.id), kb = key(b.frame, b.id);
    const bool ordered = ka < kb;
    const auto it = table_.find(ordered ? std::pair{ka, kb} : std::pair{kb, ka});
    if (it == table_.end()) return std::nullopt;
    Counts c = it->second;
    if (!ordered) std::swap(c.dm_first, c.dm_second);
    return c;
  }

  std::size_t size() const { return table_.size(); }

 private:
  static std::uint64_t key(int frame, int id) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(frame)) << 32) |
           static_cast<std::uint32_t>(id);
  }
  struct PairHash {
    std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& p) const noexcept {
      return std::hash<std::uint64_t>{}(p.first * 0x9E3779B97F4A7C15ull ^ p.second);
    }
  };
  std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, Counts, PairHash> table_;
};

struct CostConfig {
  int temporal_window = 9;
  double repulsion_cost = 1e3;
};

struct CostDiagnostics {
  std::size_t missing_correspondences = 0;
  std::size_t spatial_pairs = 0;
  std::size_t temporal_pairs = 0;
  std::size_t repulsion_pairs = 0;
};

/// Feature vector of a candidate pair, or nothing for pairs that are handled
/// by rule (same frame and kind) or lie outside the window.
struct PairFeatures {
  CostFamily family = CostFamily::spatial;
  std::vector<double> values;
  bool missing_correspondence = false;
};

inline PairFeatures pair_features(const Detection& a, const Detection& b, const Priors& priors,
                                  const CorrespondenceTable& correspondences) {
  PairFeatures out;
  const bool mixed = a.kind != b.kind;
  const Detection& head = a.kind == DetectorKind::head ? a : b;
  const Detection& body = a.kind == DetectorKind::head ? b : a;
  if (a.frame == b.frame) {
    const auto s = spatial_head_body_features(head, body, priors.spatial, priors.standard_box);
    const auto r = ratio_features(head, body, priors.ratio);
    out.family = CostFamily::spatial;
    out.values = {s.distance, s.angle, r.width, r.height};
    return out;
  }
  const auto counts = correspondences.find(a, b);
  if (!counts) out.missing_correspondence = true;
  if (mixed) {
    out.family = CostFamily::temporal_mixed;
    const auto r = ratio_features(head, body, priors.ratio);
    double ratio = 0.0;
    if (counts) {
      const double dm_head = a.kind == DetectorKind::head ? counts->dm_first : counts->dm_second;
      const double dm_body = a.kind == DetectorKind::head ? counts->dm_second : counts->dm_first;
      ratio = temporal_features(head, body, counts->co, dm_head, dm_body).front();
    }
    out.values = {ratio, r.width, r.height};
  } else {
    out.family = CostFamily::temporal_same;
    out.values = counts ? temporal_features(a, b, counts->co, counts->dm_first, counts->dm_second)
                        : std::vector<double>{0.0, 0.0, 0.0};
  }
  return out;
}

struct CostGraph {
  TrackingGraph graph;
  CostDiagnostics diagnostics;
};

/// Unary costs from detection probabilities; same-frame same-kind pairs get
/// the repulsion constant; same-frame head/body pairs use the spatial model;
/// pairs at most `temporal_window` frames apart use the temporal models.
inline CostGraph build_costs(std::vector<Detection> detections, const AffinityModel& model, const Priors& priors,
                             const CorrespondenceTable& correspondences, const CostConfig& config = {}) {
  if (detections.empty()) throw Error("build_costs: no detections");
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.frame < b.frame; });
  const std::size_t n = detections.size();
  std::vector<double> unary(n);
  for (std::size_t v = 0; v < n; ++v) unary[v] = probability_to_cost(detections[v].probability);

  CostDiagnostics diag;
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const Detection& a = detections[u];
      const Detection& b = detections[v];
      if (b.frame - a.frame > config.temporal_window) break;
      if (a.frame == b.frame && a.kind == b.kind) {
        edges.push_back({u, v, config.repulsion_cost});
        ++diag.repulsion_pairs;
        continue;
      }
      const PairFeatures f = pair_features(a, b, priors, correspondences);
      if (f.missing_correspondence) ++diag.missing_correspondences;
      (f.family == CostFamily::spatial ? diag.spatial_pairs : diag.temporal_pairs) += 1;
      const double q = probability_to_cost(model.family(f.family).predict(f.values));
      edges.push_back({u, v, q});
    }
  }
  return {TrackingGraph(std::move(detections), std::move(unary), std::move(edges), config.temporal_window), diag};
}

}  // namespace fwtrack
