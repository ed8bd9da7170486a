#pragma once

// CLEAR-MOT style evaluation.  Correspondences persist across frames while
// their IoU stays above the threshold; remaining pairs are matched greedily
// by descending IoU.  An identity switch is counted once for every ground
// truth track whose matched hypothesis differs from its previous match.

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <tuple>
#include <vector>

#include "fwtrack/error.hpp"
#include "fwtrack/graph.hpp"
#include "fwtrack/trajectory.hpp"

namespace fwtrack {

struct Metrics {
  double mota = 0.0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t id_switches = 0;
  std::size_t mostly_tracked = 0;
  std::size_t mostly_lost = 0;
  std::size_t gt_tracks = 0;
  std::size_t gt_boxes = 0;
  std::size_t matches = 0;
};

inline Metrics evaluate_metrics(std::span<const Trajectory> ground_truth, std::span<const Trajectory> hypotheses,
                                double iou_threshold = 0.5) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw Error("evaluate_metrics: IoU threshold must lie in (0,1)");

  struct Entry {
    int id;
    Box box;
  };
  std::map<int, std::pair<std::vector<Entry>, std::vector<Entry>>> frames;
  for (const auto& t : ground_truth) {
    for (const auto& [f, b] : t.boxes) frames[f].first.push_back({t.person_id, b.box});
  }
  for (const auto& t : hypotheses) {
    for (const auto& [f, b] : t.boxes) frames[f].second.push_back({t.person_id, b.box});
  }

  Metrics m;
  m.gt_tracks = ground_truth.size();
  std::map<int, int> last_match;     // gt id -> hypothesis id of its latest match
  std::map<int, std::size_t> matched_frames, total_frames;

  for (const auto& [frame, lists] : frames) {
    const auto& gts = lists.first;
    const auto& hyps = lists.second;
    m.gt_boxes += gts.size();
    std::vector<char> gt_used(gts.size(), 0), hyp_used(hyps.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;

    // Persist previous correspondences.
    for (std::size_t g = 0; g < gts.size(); ++g) {
      ++total_frames[gts[g].id];
      const auto it = last_match.find(gts[g].id);
      if (it == last_match.end()) continue;
      for (std::size_t h = 0; h < hyps.size(); ++h) {
        if (!hyp_used[h] && hyps[h].id == it->second && iou(gts[g].box, hyps[h].box) >= iou_threshold) {
          gt_used[g] = hyp_used[h] = 1;
          pairs.emplace_back(g, h);
          break;
        }
      }
    }
    // Greedy on the rest.
    std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      for (std::size_t h = 0; h < hyps.size(); ++h) {
        if (hyp_used[h]) continue;
        const double o = iou(gts[g].box, hyps[h].box);
        if (o >= iou_threshold) candidates.emplace_back(o, g, h);
      }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      if (gts[std::get<1>(a)].id != gts[std::get<1>(b)].id) return gts[std::get<1>(a)].id < gts[std::get<1>(b)].id;
      return hyps[std::get<2>(a)].id < hyps[std::get<2>(b)].id;
    });
    for (const auto& [o, g, h] : candidates) {
      if (gt_used[g] || hyp_used[h]) continue;
      gt_used[g] = hyp_used[h] = 1;
      pairs.emplace_back(g, h);
    }

    for (const auto& [g, h] : pairs) {
      const int gid = gts[g].id, hid = hyps[h].id;
      const auto it = last_match.find(gid);
      if (it != last_match.end() && it->second != hid) ++m.id_switches;
      last_match[gid] = hid;
      ++matched_frames[gid];
    }
    m.matches += pairs.size();
    m.false_negatives += gts.size() - pairs.size();
    m.false_positives += hyps.size() - pairs.size();
  }

  for (const auto& [gid, total] : total_frames) {
    const double coverage = static_cast<double>(matched_frames[gid]) / static_cast<double>(total);
    if (coverage >= 0.8) ++m.mostly_tracked;
    if (coverage < 0.2) ++m.mostly_lost;
  }
  m.mota = m.gt_boxes == 0
               ? 1.0
               : 1.0 - static_cast<double>(m.false_positives + m.false_negatives + m.id_switches) /
                           static_cast<double>(m.gt_boxes);
  return m;
}

}  // namespace fwtrack
