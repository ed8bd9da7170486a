#pragma once

// Synthetic pedestrian scenarios with head and full-body detections, plus
// random labeling instances for solver benchmarks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "fwtrack/affinity.hpp"
#include "fwtrack/graph.hpp"
#include "fwtrack/io.hpp"
#include "fwtrack/trajectory.hpp"

namespace fwtrack {

struct ScenarioParams {
  int persons = 8;
  int frames = 60;
  double image_width = 1280.0;
  double image_height = 720.0;
  double occlusion_rate = 0.0;             // expected fraction of occluded person-frames
  int min_occlusion_length = 6;
  int max_occlusion_length = 16;
  double body_miss_rate_occluded = 0.9;    // body detector miss probability while occluded
  double body_miss_rate = 0.0;             // miss probability otherwise
  double head_miss_rate = 0.0;
  double false_positive_rate = 0.0;        // expected spurious body detections per frame
  double head_false_positive_rate = 0.0;   // expected spurious head detections per frame
  double localization_noise = 0.0;         // std-dev relative to box size
  int temporal_window = 9;
};

/// Defaults of the occlusion suite used to compare head+body against body-only input.
inline ScenarioParams occlusion_suite_params() {
  ScenarioParams p;
  p.occlusion_rate = 0.3;
  p.body_miss_rate = 0.03;
  p.head_miss_rate = 0.05;
  p.false_positive_rate = 0.3;
  p.head_false_positive_rate = 0.1;
  p.localization_noise = 0.02;
  return p;
}

struct Scenario {
  std::vector<Trajectory> ground_truth;
  std::vector<Detection> detections;
  std::vector<int> person_of;  // ground-truth person per detection (-1 = false positive)
  std::vector<Correspondence> correspondences;
  std::vector<std::pair<Detection, Detection>> head_body_pairs;  // same-person, same-frame
  std::size_t body_missed_occluded = 0;  // occluded person-frames without a body but with a head
};

namespace detail {

struct PersonState {
  int first_frame = 0;
  int last_frame = 0;
  double x0 = 0.0, y0 = 0.0;  // body center at first frame
  double vx1 = 0.0, vy1 = 0.0, vx2 = 0.0, vy2 = 0.0;
  int turn_frame = 0;
  double height = 0.0;
  double aspect = 0.41;
  double head_w_ratio = 0.35, head_h_ratio = 0.16;
  double head_dx = 0.0;  // horizontal head offset relative to body width
  std::vector<char> occluded;

  Box body_at(int frame) const {
    const int t = frame - first_frame;
    const int t1 = std::min(t, turn_frame - first_frame);
    const int t2 = std::max(0, t - (turn_frame - first_frame));
    const double cx = x0 + vx1 * t1 + vx2 * t2;
    const double cy = y0 + vy1 * t1 + vy2 * t2;
    const double w = height * aspect;
    return {cx - 0.5 * w, cy - 0.5 * height, w, height};
  }
  Box head_at(int frame) const {
    const Box b = body_at(frame);
    const double hw = b.width * head_w_ratio, hh = b.height * head_h_ratio;
    const double cx = b.center_x() + head_dx * b.width;
    const double cy = b.y + 0.01 * b.height + 0.5 * hh;
    return {cx - 0.5 * hw, cy - 0.5 * hh, hw, hh};
  }
};

inline double sample_count(const Box& box, DetectorKind kind) {
  const double per_sample = kind == DetectorKind::body ? 60.0 : 12.0;
  return std::max(4.0, std::round(box.area() / per_sample));
}

inline Box shifted(Box b, double dx, double dy) {
  b.x += dx;
  b.y += dy;
  return b;
}

}  // namespace detail

/// Piecewise-linear walkers observed by a body and a head detector.  Body
/// misses concentrate in occlusion episodes while heads stay visible; pixel
/// correspondences between frames follow the true motion for detections of
/// one person and only leak through spatial overlap otherwise.
inline Scenario synthesize_scenario(std::uint64_t seed, const ScenarioParams& params) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
  const int F = params.frames;

  std::vector<detail::PersonState> persons(static_cast<std::size_t>(params.persons));
  for (auto& p : persons) {
    const int length = std::max(F / 2, static_cast<int>(std::round(uniform(0.6, 1.0) * F)));
    p.first_frame = static_cast<int>(std::floor(uniform(0.0, F - length + 1.0 - 1e-9)));
    p.last_frame = p.first_frame + length - 1;
    p.height = uniform(110.0, 170.0);
    p.x0 = uniform(100.0, params.image_width - 100.0);
    p.y0 = uniform(120.0, params.image_height - 120.0);
    const double speed = uniform(1.0, 4.0), heading = uniform(0.0, 2.0 * std::numbers::pi);
    p.vx1 = speed * std::cos(heading);
    p.vy1 = 0.3 * speed * std::sin(heading);
    const double heading2 = heading + uniform(-1.0, 1.0);
    p.vx2 = speed * std::cos(heading2);
    p.vy2 = 0.3 * speed * std::sin(heading2);
    p.turn_frame = p.first_frame + static_cast<int>(uniform(0.2, 0.8) * length);
    p.aspect = uniform(0.38, 0.44);
    p.head_w_ratio = uniform(0.32, 0.38);
    p.head_h_ratio = uniform(0.15, 0.17);
    p.head_dx = uniform(-0.04, 0.04);
    p.occluded.assign(static_cast<std::size_t>(F), 0);
    if (params.occlusion_rate > 0.0) {
      const double mean_len = 0.5 * (params.min_occlusion_length + params.max_occlusion_length);
      const double episodes = params.occlusion_rate * length / mean_len;
      const int count = static_cast<int>(std::floor(episodes + unit(rng)));
      for (int e = 0; e < count; ++e) {
        const int len = params.min_occlusion_length +
                        static_cast<int>(unit(rng) * (params.max_occlusion_length - params.min_occlusion_length + 1));
        const int start = p.first_frame + static_cast<int>(unit(rng) * std::max(1, length - len));
        for (int f = start; f < std::min(start + len, p.last_frame + 1); ++f) p.occluded[static_cast<std::size_t>(f)] = 1;
      }
    }
  }

  Scenario sc;
  sc.ground_truth.resize(persons.size());
  for (std::size_t i = 0; i < persons.size(); ++i) {
    sc.ground_truth[i].person_id = static_cast<int>(i + 1);
    for (int f = persons[i].first_frame; f <= persons[i].last_frame; ++f) {
      sc.ground_truth[i].boxes[f] = {persons[i].body_at(f), false};
    }
  }

  auto jitter = [&](Box b) {
    if (params.localization_noise <= 0.0) return b;
    const double s = params.localization_noise;
    b.x += s * b.width * gauss(rng);
    b.y += s * b.height * gauss(rng);
    b.width *= std::max(0.5, 1.0 + s * gauss(rng));
    b.height *= std::max(0.5, 1.0 + s * gauss(rng));
    return b;
  };
  auto poisson = [&](double mean) { return mean > 0.0 ? std::poisson_distribution<int>(mean)(rng) : 0; };

  int next_id = 1;
  for (int f = 0; f < F; ++f) {
    for (std::size_t i = 0; i < persons.size(); ++i) {
      const auto& p = persons[i];
      if (f < p.first_frame || f > p.last_frame) continue;
      const bool occluded = p.occluded[static_cast<std::size_t>(f)] != 0;
      const bool body_seen = unit(rng) >= (occluded ? params.body_miss_rate_occluded : params.body_miss_rate);
      const bool head_seen = unit(rng) >= params.head_miss_rate;
      Detection body, head;
      if (body_seen) {
        body = {next_id++, f, jitter(p.body_at(f)), DetectorKind::body,
                occluded ? uniform(0.55, 0.75) : uniform(0.8, 0.97)};
        sc.detections.push_back(body);
        sc.person_of.push_back(static_cast<int>(i));
      }
      if (head_seen) {
        head = {next_id++, f, jitter(p.head_at(f)), DetectorKind::head, uniform(0.75, 0.95)};
        sc.detections.push_back(head);
        sc.person_of.push_back(static_cast<int>(i));
      }
      if (body_seen && head_seen) sc.head_body_pairs.emplace_back(head, body);
      if (occluded && !body_seen && head_seen) ++sc.body_missed_occluded;
    }
    for (int k = poisson(params.false_positive_rate); k > 0; --k) {
      const double h = uniform(100.0, 170.0);
      const Box b{uniform(0.0, params.image_width - 0.41 * h), uniform(0.0, params.image_height - h), 0.41 * h, h};
      sc.detections.push_back({next_id++, f, b, DetectorKind::body, uniform(0.3, 0.62)});
      sc.person_of.push_back(-1);
    }
    for (int k = poisson(params.head_false_positive_rate); k > 0; --k) {
      const double s = uniform(18.0, 28.0);
      const Box b{uniform(0.0, params.image_width - s), uniform(0.0, params.image_height - s), s, s};
      sc.detections.push_back({next_id++, f, b, DetectorKind::head, uniform(0.2, 0.45)});
      sc.person_of.push_back(-1);
    }
  }

  // Correspondences between detections in different frames within the window.
  const std::size_t n = sc.detections.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const Detection& da = sc.detections[a];
      const Detection& db = sc.detections[b];
      const int dt = db.frame - da.frame;
      if (dt == 0) continue;
      if (dt > params.temporal_window) break;
      const double dm_a = detail::sample_count(da.box, da.kind);
      const double dm_b = detail::sample_count(db.box, db.kind);
      // Track the samples of da along the motion of the person it belongs to.
      double dx = 0.0, dy = 0.0;
      const int pa = sc.person_of[a];
      if (pa >= 0) {
        const auto& p = persons[static_cast<std::size_t>(pa)];
        const Box from = p.body_at(da.frame), to = p.body_at(db.frame);
        dx = to.x - from.x;
        dy = to.y - from.y;
      }
      const Box moved = detail::shifted(da.box, dx, dy);
      const double coverage = intersection_area(moved, db.box) / std::min(da.box.area(), db.box.area());
      if (coverage <= 0.0) continue;
      const bool same = pa >= 0 && pa == sc.person_of[b];
      const double decay = 1.0 - 0.03 * dt;
      const double rate = same ? std::clamp(0.85 + 0.05 * gauss(rng), 0.6, 0.95) : 0.2 * unit(rng);
      const double cap = std::min(dm_a, dm_b);
      const double co = std::min(cap, std::round(cap * std::min(1.0, coverage) * rate * decay));
      if (co <= 0.0) continue;
      sc.correspondences.push_back({da.frame, da.id, db.frame, db.id, co, dm_a, dm_b});
    }
  }
  return sc;
}

/// Drops head detections (and their correspondences) for body-only tracking.
inline Scenario body_only(const Scenario& sc) {
  Scenario out;
  out.ground_truth = sc.ground_truth;
  std::map<std::pair<int, int>, bool> keep;
  for (std::size_t i = 0; i < sc.detections.size(); ++i) {
    if (sc.detections[i].kind != DetectorKind::body) continue;
    out.detections.push_back(sc.detections[i]);
    out.person_of.push_back(sc.person_of[i]);
    keep[{sc.detections[i].frame, sc.detections[i].id}] = true;
  }
  for (const auto& c : sc.correspondences) {
    if (keep.count({c.frame_a, c.id_a}) && keep.count({c.frame_b, c.id_b})) out.correspondences.push_back(c);
  }
  return out;
}

/// Labeled pair features of every cost family, from the scenario's truth.
inline TrainingSet training_samples(const Scenario& sc, const Priors& priors, int temporal_window) {
  TrainingSet set;
  const CorrespondenceTable table(sc.correspondences);
  std::vector<std::size_t> order(sc.detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sc.detections[a].frame < sc.detections[b].frame; });
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const Detection& a = sc.detections[order[i]];
      const Detection& b = sc.detections[order[j]];
      if (b.frame - a.frame > temporal_window) break;
      if (a.frame == b.frame && a.kind == b.kind) continue;
      const PairFeatures f = pair_features(a, b, priors, table);
      const int pa = sc.person_of[order[i]], pb = sc.person_of[order[j]];
      auto& data = set[f.family];
      data.samples.push_back(f.values);
      data.labels.push_back(pa >= 0 && pa == pb ? 1 : 0);
    }
  }
  return set;
}

/// Random labeling instance: unary costs uniform in [−1,1], each pair present
/// with probability `density` and pairwise cost uniform in [−1,1].
inline TrackingGraph random_instance(std::uint64_t seed, std::size_t nodes, double density, double cost_range = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> cost(-cost_range, cost_range);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> unary(nodes);
  for (auto& c : unary) c = cost(rng);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < nodes; ++u) {
    for (std::size_t v = u + 1; v < nodes; ++v) {
      if (unit(rng) < density) edges.push_back({u, v, cost(rng)});
    }
  }
  return TrackingGraph::from_costs(std::move(unary), std::move(edges));
}

}  // namespace fwtrack
