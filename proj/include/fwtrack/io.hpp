#pragma once

// CSV readers and writers for detections, correspondences, trajectories,
// metrics, solver traces and labeled training features.

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fwtrack/affinity.hpp"
#include "fwtrack/error.hpp"
#include "fwtrack/fw_solver.hpp"
#include "fwtrack/graph.hpp"
#include "fwtrack/hierarchy.hpp"
#include "fwtrack/trajectory.hpp"

namespace fwtrack {

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return fields;
}

inline bool skip_line(const std::string& line, const char* header_prefix) {
  const auto b = line.find_first_not_of(" \t\r");
  if (b == std::string::npos || line[b] == '#') return true;
  return line.compare(b, std::char_traits<char>::length(header_prefix), header_prefix) == 0;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line_no, const char* what) {
  std::istringstream is(s);
  T value{};
  if (!(is >> value) || !(is >> std::ws).eof()) {
    throw Error(std::string(what) + " line " + std::to_string(line_no) + ": cannot parse '" + s + "'");
  }
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

}  // namespace detail

/// Detector score → probability: sigmoid(scale · (score − offset)).
struct ScoreCalibration {
  double scale = 1.0;
  double offset = 0.0;

  double operator()(double score) const { return sigmoid(scale * (score - offset)); }
};

/// Rows: frame,id,x,y,w,h,score,kind (kind ∈ {head, body}); '#' comments and
/// a leading "frame" header are skipped.
inline std::vector<Detection> load_detections(std::istream& is, const ScoreCalibration& calibration = {}) {
  std::vector<Detection> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::skip_line(line, "frame")) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 8) throw Error("detections line " + std::to_string(line_no) + ": expected 8 fields");
    Detection d;
    d.frame = detail::parse_number<int>(f[0], line_no, "detections");
    d.id = detail::parse_number<int>(f[1], line_no, "detections");
    d.box.x = detail::parse_number<double>(f[2], line_no, "detections");
    d.box.y = detail::parse_number<double>(f[3], line_no, "detections");
    d.box.width = detail::parse_number<double>(f[4], line_no, "detections");
    d.box.height = detail::parse_number<double>(f[5], line_no, "detections");
    const double score = detail::parse_number<double>(f[6], line_no, "detections");
    if (f[7] == "head") {
      d.kind = DetectorKind::head;
    } else if (f[7] == "body") {
      d.kind = DetectorKind::body;
    } else {
      throw Error("detections line " + std::to_string(line_no) + ": unknown kind '" + f[7] + "'");
    }
    if (d.frame < 0) throw Error("detections line " + std::to_string(line_no) + ": negative frame");
    if (!(d.box.width > 0.0 && d.box.height > 0.0)) {
      throw Error("detections line " + std::to_string(line_no) + ": box width and height must be positive");
    }
    if (!std::isfinite(score)) throw Error("detections line " + std::to_string(line_no) + ": non-finite score");
    d.probability = clamp_probability(calibration(score));
    out.push_back(d);
  }
  return out;
}

inline std::vector<Detection> load_detections(const std::string& path, const ScoreCalibration& calibration = {}) {
  auto in = detail::open_input(path);
  return load_detections(in, calibration);
}

/// Inverse of the default calibration, used when writing synthetic detections.
inline void write_detections(std::ostream& os, std::span<const Detection> detections) {
  os << "frame,id,x,y,w,h,score,kind\n";
  for (const auto& d : detections) {
    const double p = clamp_probability(d.probability);
    fmt::print(os, "{},{},{:.3f},{:.3f},{:.3f},{:.3f},{:.6f},{}\n", d.frame, d.id, d.box.x, d.box.y, d.box.width,
               d.box.height, std::log(p / (1.0 - p)), to_string(d.kind));
  }
}

/// Rows: frame_a,det_id_a,frame_b,det_id_b,co,dm_a,dm_b.
inline std::vector<Correspondence> load_correspondences(std::istream& is) {
  std::vector<Correspondence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::skip_line(line, "frame_a")) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 7) throw Error("correspondences line " + std::to_string(line_no) + ": expected 7 fields");
    Correspondence c;
    c.frame_a = detail::parse_number<int>(f[0], line_no, "correspondences");
    c.id_a = detail::parse_number<int>(f[1], line_no, "correspondences");
    c.frame_b = detail::parse_number<int>(f[2], line_no, "correspondences");
    c.id_b = detail::parse_number<int>(f[3], line_no, "correspondences");
    c.co = detail::parse_number<double>(f[4], line_no, "correspondences");
    c.dm_a = detail::parse_number<double>(f[5], line_no, "correspondences");
    c.dm_b = detail::parse_number<double>(f[6], line_no, "correspondences");
    if (c.co < 0.0 || c.dm_a <= 0.0 || c.dm_b <= 0.0 || c.co > std::min(c.dm_a, c.dm_b)) {
      throw Error("correspondences line " + std::to_string(line_no) + ": inconsistent counts");
    }
    out.push_back(c);
  }
  return out;
}

inline std::vector<Correspondence> load_correspondences(const std::string& path) {
  auto in = detail::open_input(path);
  return load_correspondences(in);
}

inline void write_correspondences(std::ostream& os, std::span<const Correspondence> rows) {
  os << "frame_a,det_id_a,frame_b,det_id_b,co,dm_a,dm_b\n";
  for (const auto& c : rows) {
    fmt::print(os, "{},{},{},{},{},{},{}\n", c.frame_a, c.id_a, c.frame_b, c.id_b, c.co, c.dm_a, c.dm_b);
  }
}

/// MOT-style rows frame,person_id,x,y,w,h,flag sorted by frame then id.
inline void write_trajectories(std::ostream& os, std::span<const Trajectory> trajectories) {
  struct Row {
    int frame;
    int id;
    const TrajectoryBox* box;
  };
  std::vector<Row> rows;
  for (const auto& t : trajectories) {
    for (const auto& [frame, box] : t.boxes) rows.push_back({frame, t.person_id, &box});
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.frame != b.frame ? a.frame < b.frame : a.id < b.id; });
  os << "frame,person_id,x,y,w,h,flag\n";
  for (const auto& r : rows) {
    fmt::print(os, "{},{},{:.2f},{:.2f},{:.2f},{:.2f},{}\n", r.frame, r.id, r.box->box.x, r.box->box.y,
               r.box->box.width, r.box->box.height, r.box->extrapolated ? 1 : 0);
  }
}

inline std::vector<Trajectory> load_trajectories(std::istream& is) {
  std::map<int, Trajectory> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::skip_line(line, "frame")) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 7) throw Error("trajectories line " + std::to_string(line_no) + ": expected 7 fields");
    const int frame = detail::parse_number<int>(f[0], line_no, "trajectories");
    const int id = detail::parse_number<int>(f[1], line_no, "trajectories");
    TrajectoryBox tb;
    tb.box = {detail::parse_number<double>(f[2], line_no, "trajectories"),
              detail::parse_number<double>(f[3], line_no, "trajectories"),
              detail::parse_number<double>(f[4], line_no, "trajectories"),
              detail::parse_number<double>(f[5], line_no, "trajectories")};
    tb.extrapolated = detail::parse_number<int>(f[6], line_no, "trajectories") != 0;
    auto& t = by_id[id];
    t.person_id = id;
    if (!t.boxes.emplace(frame, tb).second) {
      throw Error("trajectories line " + std::to_string(line_no) + ": two boxes for one person in one frame");
    }
  }
  std::vector<Trajectory> out;
  for (auto& [id, t] : by_id) out.push_back(std::move(t));
  return out;
}

inline std::vector<Trajectory> load_trajectories(const std::string& path) {
  auto in = detail::open_input(path);
  return load_trajectories(in);
}

inline void write_trace_csv(std::ostream& os, std::span<const TraceSample> trace, const std::string& method = {}) {
  for (const auto& s : trace) {
    if (!method.empty()) os << method << ',';
    fmt::print(os, "{:.6f},{:.12g},{:.6g},{:.6g}\n", s.wall_seconds, s.best_objective, s.gap, s.lambda);
  }
}

inline void write_hierarchy_csv(std::ostream& os, std::span<const HierarchyIteration> iterations) {
  os << "iteration,clusters,objective,merges,detached,reconsidered,accepted\n";
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    const auto& it = iterations[i];
    fmt::print(os, "{},{},{:.12g},{},{},{},{}\n", i, it.clusters, it.objective, it.merges, it.detached,
               it.reconsidered, it.accepted ? 1 : 0);
  }
}

/// Labeled feature rows: family,label,f1,...,fk.
struct LabeledFeatures {
  std::vector<std::vector<double>> samples;
  std::vector<int> labels;
};

using TrainingSet = std::map<CostFamily, LabeledFeatures>;

inline void write_training_set(std::ostream& os, const TrainingSet& set) {
  os << "# family,label,features...\n";
  for (const auto& [family, data] : set) {
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      os << to_string(family) << ',' << data.labels[i];
      for (double x : data.samples[i]) fmt::print(os, ",{:.9g}", x);
      os << '\n';
    }
  }
}

inline TrainingSet load_training_set(std::istream& is) {
  TrainingSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::skip_line(line, "family")) continue;
    const auto f = detail::split_csv(line);
    if (f.size() < 2) throw Error("features line " + std::to_string(line_no) + ": expected family,label,...");
    const CostFamily family = parse_cost_family(f[0]);
    if (f.size() != 2 + feature_count(family)) {
      throw Error("features line " + std::to_string(line_no) + ": wrong feature count for " + f[0]);
    }
    auto& data = set[family];
    data.labels.push_back(detail::parse_number<int>(f[1], line_no, "features"));
    std::vector<double> x;
    for (std::size_t i = 2; i < f.size(); ++i) x.push_back(detail::parse_number<double>(f[i], line_no, "features"));
    data.samples.push_back(std::move(x));
  }
  return set;
}

/// Fits one logistic model per cost family.
inline AffinityModel train_model(const TrainingSet& set, const LogisticFitOptions& options = {}) {
  AffinityModel model;
  for (CostFamily f : {CostFamily::spatial, CostFamily::temporal_same, CostFamily::temporal_mixed}) {
    const auto it = set.find(f);
    if (it == set.end()) throw Error(std::string("train: no samples for family ") + to_string(f));
    model.family(f) = fit_logistic(it->second.samples, it->second.labels, options).model;
  }
  return model;
}

}  // namespace fwtrack
