#pragma once

// Tracking harness: split a detection sequence into overlapping batches,
// solve each batch with FW+λ followed by the hierarchy, and stitch the
// per-batch clusters into trajectories.

#include <algorithm>
#include <limits>
#include <span>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fwtrack/affinity.hpp"
#include "fwtrack/error.hpp"
#include "fwtrack/fw_solver.hpp"
#include "fwtrack/graph.hpp"
#include "fwtrack/hierarchy.hpp"
#include "fwtrack/trajectory.hpp"

namespace fwtrack {

struct Batch {
  std::vector<Detection> detections;  // ordered by frame
  std::vector<int> frames;            // distinct frames, ascending
  std::size_t overlap_frames = 0;     // leading frames shared with the previous batch
  bool oversized = false;             // a single frame larger than the node cap
};

/// Frames are packed greedily into batches of at most `max_nodes`
/// detections.  Each batch re-includes up to `overlap` trailing frames of
/// its predecessor, limited to frames the predecessor did not share with its
/// own predecessor and to what fits next to at least one new frame.
inline std::vector<Batch> batch_sequence(std::vector<Detection> detections, std::size_t max_nodes, int overlap) {
  if (max_nodes < 1) throw Error("batch_sequence: max_nodes must be positive");
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.frame < b.frame; });
  std::vector<int> frames;
  std::vector<std::size_t> begin;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (frames.empty() || frames.back() != detections[i].frame) {
      frames.push_back(detections[i].frame);
      begin.push_back(i);
    }
  }
  begin.push_back(detections.size());
  auto count = [&](std::size_t f) { return begin[f + 1] - begin[f]; };
  auto span_count = [&](std::size_t a, std::size_t b) { return begin[b] - begin[a]; };

  std::vector<Batch> batches;
  std::size_t next = 0;        // first frame not yet covered
  std::size_t prev_new = 0;    // frames the previous batch added
  while (next < frames.size()) {
    std::size_t shared = std::min<std::size_t>(static_cast<std::size_t>(std::max(overlap, 0)), prev_new);
    while (shared > 0 && span_count(next - shared, next) + count(next) > max_nodes) --shared;
    const std::size_t first = next - shared;
    std::size_t end = next;
    while (end < frames.size() && span_count(first, end + 1) <= max_nodes) ++end;
    Batch batch;
    if (end == next) {
      end = next + 1;
      batch.oversized = true;
    }
    batch.overlap_frames = shared;
    batch.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(first),
                        frames.begin() + static_cast<std::ptrdiff_t>(end));
    batch.detections.assign(detections.begin() + static_cast<std::ptrdiff_t>(begin[first]),
                            detections.begin() + static_cast<std::ptrdiff_t>(begin[end]));
    prev_new = end - next;
    next = end;
    batches.push_back(std::move(batch));
  }
  return batches;
}

struct BatchSolution {
  Labeling labeling;
  double fw_objective = 0.0;
  double objective = 0.0;
  FwResult fw;
  HierarchyResult hierarchy;
};

/// FW+λ followed by the hierarchical refinement.
inline BatchSolution solve_batch(const TrackingGraph& graph, const SolverConfig& config) {
  BatchSolution out;
  if (graph.empty()) {
    out.labeling = Labeling(0, config.max_labels);
    return out;
  }
  out.fw = solve_with_schedule(graph, config);
  out.fw_objective = out.fw.best_objective;
  out.hierarchy = solve_hierarchical(graph, out.fw.best_binary, config);
  out.labeling = out.hierarchy.labeling;
  out.objective = out.hierarchy.objective;
  return out;
}

/// Body box implied by a head box: size from the mean head/body ratios, and
/// the head center placed at the expected relative head position.
inline Box extrapolate_body(const Box& head, const Priors& priors) {
  Box body;
  body.width = head.width / priors.ratio.width_ratio;
  body.height = head.height / priors.ratio.height_ratio;
  const double fx = priors.spatial.expected_head.x / priors.standard_box.width;
  const double from_top = 1.0 - priors.spatial.expected_head.y / priors.standard_box.height;
  body.x = head.center_x() - fx * body.width;
  body.y = head.center_y() - from_top * body.height;
  return body;
}

/// Solved batch as seen by the stitcher: nodes in graph order + labels.
struct SolvedBatch {
  std::vector<Detection> nodes;
  Labeling labeling;
  std::vector<int> frames;
  std::size_t overlap_frames = 0;
};

struct StitchResult {
  std::vector<Trajectory> trajectories;
  std::vector<std::string> notes;  // tie-breaks and other decisions worth logging
};

/// Clusters of consecutive batches are linked by majority vote over the
/// detections they share; each detection is owned by the first batch that
/// contains it.
inline StitchResult stitch(std::span<const SolvedBatch> batches, const Priors& priors) {
  using Key = std::pair<int, int>;  // (frame, id)
  StitchResult out;
  std::map<int, std::vector<const Detection*>> members;  // provisional trajectory id -> detections
  int next_id = 0;
  std::map<Key, int> prev_traj_of;   // detection in previous batch -> trajectory id
  std::map<int, int> prev_label_traj;

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    if (batch.labeling.size() != batch.nodes.size()) throw Error("stitch: labeling does not match batch nodes");
    const int last_shared_frame =
        batch.overlap_frames > 0 ? batch.frames[batch.overlap_frames - 1] : std::numeric_limits<int>::min();
    auto shared = [&](const Detection& d) { return b > 0 && batch.overlap_frames > 0 && d.frame <= last_shared_frame; };

    // votes[(traj, label)] = shared detections in both
    std::map<std::pair<int, int>, int> votes;
    for (std::size_t v = 0; v < batch.nodes.size(); ++v) {
      const auto& d = batch.nodes[v];
      if (!shared(d) || batch.labeling.rejected(v)) continue;
      const auto it = prev_traj_of.find({d.frame, d.id});
      if (it != prev_traj_of.end()) ++votes[{it->second, batch.labeling.raw(v)}];
    }
    std::vector<std::tuple<int, int, int>> ranked;  // (count, label, traj)
    for (const auto& [key, count] : votes) ranked.emplace_back(count, key.second, key.first);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
      return std::get<2>(a) < std::get<2>(b);
    });
    std::map<int, int> label_traj;
    std::map<int, int> traj_matched_count;
    for (const auto& [count, label, traj] : ranked) {
      if (traj_matched_count.count(traj)) {
        if (traj_matched_count[traj] == count) {
          out.notes.push_back("batch " + std::to_string(b) + ": trajectory " + std::to_string(traj) +
                              " split evenly; kept the lower batch-local label");
        }
        continue;
      }
      if (label_traj.count(label)) continue;
      label_traj[label] = traj;
      traj_matched_count[traj] = count;
    }

    std::map<Key, int> traj_of;
    for (std::size_t v = 0; v < batch.nodes.size(); ++v) {
      if (batch.labeling.rejected(v)) continue;
      const auto& d = batch.nodes[v];
      const int label = batch.labeling.raw(v);
      auto it = label_traj.find(label);
      if (it == label_traj.end()) it = label_traj.emplace(label, next_id++).first;
      traj_of[{d.frame, d.id}] = it->second;
      if (!shared(d)) members[it->second].push_back(&d);
    }
    prev_traj_of = std::move(traj_of);
  }

  // Assemble boxes: prefer the most confident body detection, otherwise
  // extrapolate from the most confident head.
  std::vector<Trajectory> trajectories;
  for (auto& [id, dets] : members) {
    Trajectory t;
    std::map<int, std::pair<const Detection*, const Detection*>> per_frame;  // body, head
    for (const Detection* d : dets) {
      t.detection_ids.push_back(d->id);
      auto& slot = per_frame[d->frame];
      auto& best = d->kind == DetectorKind::body ? slot.first : slot.second;
      if (!best || d->probability > best->probability) best = d;
    }
    for (const auto& [frame, slot] : per_frame) {
      if (slot.first) {
        t.boxes[frame] = {slot.first->box, false};
      } else {
        t.boxes[frame] = {extrapolate_body(slot.second->box, priors), true};
      }
    }
    std::sort(t.detection_ids.begin(), t.detection_ids.end());
    trajectories.push_back(std::move(t));
  }
  std::sort(trajectories.begin(), trajectories.end(), [](const Trajectory& a, const Trajectory& b) {
    const auto fa = a.boxes.begin()->first, fb = b.boxes.begin()->first;
    return fa != fb ? fa < fb : a.detection_ids.front() < b.detection_ids.front();
  });
  for (std::size_t i = 0; i < trajectories.size(); ++i) trajectories[i].person_id = static_cast<int>(i + 1);
  out.trajectories = std::move(trajectories);
  return out;
}

struct PipelineConfig {
  SolverConfig solver;
  CostConfig costs;
  std::size_t batch_max_nodes = 1800;
};

struct BatchReport {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  bool oversized = false;
  double fw_objective = 0.0;
  double objective = 0.0;
  std::size_t missing_correspondences = 0;
};

struct TrackingOutput {
  std::vector<Trajectory> trajectories;
  std::vector<BatchReport> batches;
  std::vector<std::string> notes;
};

inline TrackingOutput track(const std::vector<Detection>& detections, const CorrespondenceTable& correspondences,
                            const AffinityModel& model, const Priors& priors, const PipelineConfig& config) {
  config.solver.validate();
  TrackingOutput out;
  std::vector<SolvedBatch> solved;
  for (auto& batch : batch_sequence(detections, config.batch_max_nodes, config.costs.temporal_window)) {
    if (batch.oversized) {
      out.notes.push_back("frame " + std::to_string(batch.frames.front()) + " alone exceeds the batch cap (" +
                          std::to_string(batch.detections.size()) + " detections)");
    }
    CostGraph cg = build_costs(batch.detections, model, priors, correspondences, config.costs);
    const BatchSolution sol = solve_batch(cg.graph, config.solver);
    out.batches.push_back({cg.graph.size(), cg.graph.edge_count(), batch.oversized, sol.fw_objective, sol.objective,
                           cg.diagnostics.missing_correspondences});
    SolvedBatch sb;
    sb.nodes.assign(cg.graph.nodes().begin(), cg.graph.nodes().end());
    sb.labeling = sol.labeling;
    sb.frames = std::move(batch.frames);
    sb.overlap_frames = batch.overlap_frames;
    solved.push_back(std::move(sb));
  }
  StitchResult stitched = stitch(solved, priors);
  out.trajectories = std::move(stitched.trajectories);
  out.notes.insert(out.notes.end(), stitched.notes.begin(), stitched.notes.end());
  return out;
}

}  // namespace fwtrack
