#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "fwtrack/fwtrack.hpp"

using namespace fwtrack;

namespace {

Detection det(int id, int frame, DetectorKind kind = DetectorKind::body, Box box = {0, 0, 40, 100}) {
  return {id, frame, box, kind, 0.8};
}

std::vector<Detection> frames_of(int frames, int per_frame) {
  std::vector<Detection> d;
  int id = 0;
  for (int f = 0; f < frames; ++f) {
    for (int k = 0; k < per_frame; ++k) d.push_back(det(id++, f, DetectorKind::body, {100.0 * k, 0, 40, 100}));
  }
  return d;
}

Trajectory track_of(int id, std::initializer_list<std::pair<int, Box>> boxes) {
  Trajectory t;
  t.person_id = id;
  for (const auto& [f, b] : boxes) t.boxes[f] = {b, false};
  return t;
}

Trajectory line_track(int id, int first, int last, double x) {
  Trajectory t;
  t.person_id = id;
  for (int f = first; f <= last; ++f) t.boxes[f] = {{x, 0, 40, 100}, false};
  return t;
}

// Shared-detection bookkeeping used by the batching invariants.
void check_batch_cover(const std::vector<Detection>& all, const std::vector<Batch>& batches) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> seen;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    for (const auto& d : batches[b].detections) seen[{d.frame, d.id}].push_back(b);
  }
  ASSERT_EQ(seen.size(), all.size());
  for (const auto& [key, where] : seen) {
    ASSERT_GE(where.size(), 1u);
    ASSERT_LE(where.size(), 2u);
    if (where.size() == 2) {
      EXPECT_EQ(where[1], where[0] + 1);
      const Batch& next = batches[where[1]];
      ASSERT_GT(next.overlap_frames, 0u);
      EXPECT_LE(key.first, next.frames[next.overlap_frames - 1]);
    }
  }
}

}  // namespace

TEST(BatchSequence, SmallInputIsOneBatch) {
  const auto d = frames_of(10, 10);
  const auto b = batch_sequence(d, 1800, 9);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].detections.size(), 100u);
  EXPECT_EQ(b[0].overlap_frames, 0u);
  EXPECT_FALSE(b[0].oversized);
}

TEST(BatchSequence, TenPerFrameCapTwentyFive) {
  // Two frames fit under the cap; one of them is shared with the next batch.
  const auto d = frames_of(6, 10);
  const auto b = batch_sequence(d, 25, 2);
  ASSERT_EQ(b.size(), 5u);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(b[i].frames.size(), 2u);
    EXPECT_EQ(b[i].frames.front(), static_cast<int>(i));
    EXPECT_EQ(b[i].overlap_frames, i == 0 ? 0u : 1u);
    EXPECT_LE(b[i].detections.size(), 25u);
  }
  check_batch_cover(d, b);
}

TEST(BatchSequence, FullWindowOverlapWhenItFits) {
  const auto d = frames_of(40, 10);
  const auto b = batch_sequence(d, 200, 9);
  ASSERT_GE(b.size(), 2u);
  for (std::size_t i = 1; i < b.size(); ++i) EXPECT_EQ(b[i].overlap_frames, 9u);
  check_batch_cover(d, b);
}

TEST(BatchSequence, OversizedFrameIsFlagged) {
  const auto d = frames_of(1, 30);
  const auto b = batch_sequence(d, 25, 2);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_TRUE(b[0].oversized);
  EXPECT_EQ(b[0].detections.size(), 30u);
}

TEST(BatchSequence, CoverInvariantOnRandomSequences) {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<int> per(0, 12), cap(5, 60), win(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> d;
    int id = 0;
    for (int f = 0; f < 30; ++f) {
      const int k = per(rng);
      for (int i = 0; i < k; ++i) d.push_back(det(id++, f));
    }
    std::shuffle(d.begin(), d.end(), rng);
    const std::size_t max_nodes = static_cast<std::size_t>(cap(rng));
    const auto b = batch_sequence(d, max_nodes, win(rng));
    for (const auto& batch : b) {
      if (!batch.oversized) EXPECT_LE(batch.detections.size(), max_nodes);
      for (std::size_t i = 1; i < batch.detections.size(); ++i) {
        EXPECT_LE(batch.detections[i - 1].frame, batch.detections[i].frame);
      }
    }
    check_batch_cover(d, b);
  }
}

TEST(BatchSequence, ZeroCapIsAnError) {
  EXPECT_THROW(batch_sequence(frames_of(1, 1), 0, 2), Error);
}

TEST(SolveBatch, EmptyBatch) {
  const BatchSolution s = solve_batch(TrackingGraph{}, SolverConfig{});
  EXPECT_EQ(s.labeling.size(), 0u);
  EXPECT_EQ(s.objective, 0.0);
}

TEST(SolveBatch, NeverBelowTheOptimumAndNeverAboveFw) {
  for (int seed = 0; seed < 40; ++seed) {
    const auto g = random_instance(6100 + seed, 8, 0.7);
    SolverConfig cfg;
    cfg.max_labels = 3;
    const BatchSolution s = solve_batch(g, cfg);
    const double exact = exact_partition_solver(g, 3).objective;
    EXPECT_GE(s.objective - exact, -1e-9) << "seed " << seed;
    EXPECT_LE(s.objective, s.fw_objective + 1e-12);
    EXPECT_EQ(s.objective, labeling_objective(g, s.labeling));
  }
}

TEST(SolveBatch, Deterministic) {
  const auto g = random_instance(62, 30, 0.3);
  const BatchSolution a = solve_batch(g, SolverConfig{}), b = solve_batch(g, SolverConfig{});
  EXPECT_EQ(a.labeling, b.labeling);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(Stitch, UnanimousOverlapKeepsTheIdentity) {
  SolvedBatch first;
  first.frames = {0, 1, 2, 3};
  first.nodes = {det(1, 0), det(2, 1), det(3, 2), det(4, 3)};
  first.labeling = Labeling({0, 0, 0, 0}, 2);
  SolvedBatch second;
  second.frames = {1, 2, 3, 4};
  second.overlap_frames = 3;
  second.nodes = {det(2, 1), det(3, 2), det(4, 3), det(5, 4)};
  second.labeling = Labeling({1, 1, 1, 1}, 2);
  const std::vector<SolvedBatch> batches{first, second};
  const StitchResult r = stitch(batches, Priors{});
  ASSERT_EQ(r.trajectories.size(), 1u);
  EXPECT_EQ(r.trajectories[0].boxes.size(), 5u);
  EXPECT_EQ(r.trajectories[0].detection_ids, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_TRUE(r.notes.empty());
}

TEST(Stitch, EvenSplitGoesToTheLowerLabel) {
  SolvedBatch first;
  first.frames = {0, 1, 2};
  first.nodes = {det(1, 0), det(2, 1), det(3, 2)};
  first.labeling = Labeling({0, 0, 0}, 2);
  SolvedBatch second;
  second.frames = {1, 2, 3};
  second.overlap_frames = 2;
  second.nodes = {det(2, 1), det(3, 2), det(4, 3, DetectorKind::body, {200, 0, 40, 100}), det(5, 3)};
  second.labeling = Labeling({1, 0, 1, 0}, 2);
  const std::vector<SolvedBatch> batches{first, second};
  const StitchResult r = stitch(batches, Priors{});
  ASSERT_EQ(r.trajectories.size(), 2u);
  EXPECT_EQ(r.trajectories[0].detection_ids, (std::vector<int>{1, 2, 3, 5}));
  EXPECT_EQ(r.trajectories[1].detection_ids, (std::vector<int>{4}));
  ASSERT_EQ(r.notes.size(), 1u);
  EXPECT_NE(r.notes[0].find("lower batch-local label"), std::string::npos);
}

TEST(Stitch, UnmatchedClustersGetFreshIds) {
  SolvedBatch first;
  first.frames = {0};
  first.nodes = {det(1, 0)};
  first.labeling = Labeling(std::vector<int>{0}, 2);
  SolvedBatch second;
  second.frames = {1};
  second.nodes = {det(2, 1)};
  second.labeling = Labeling(std::vector<int>{0}, 2);
  const std::vector<SolvedBatch> batches{first, second};
  const StitchResult r = stitch(batches, Priors{});
  ASSERT_EQ(r.trajectories.size(), 2u);
  EXPECT_EQ(r.trajectories[0].person_id, 1);
  EXPECT_EQ(r.trajectories[1].person_id, 2);
}

TEST(Stitch, HeadOnlyFrameIsExtrapolated) {
  Priors priors;
  priors.ratio = {0.4, 0.2};
  SolvedBatch b;
  b.frames = {0, 1};
  b.nodes = {det(1, 0), det(2, 0, DetectorKind::head, {10, 5, 16, 20}), det(3, 1, DetectorKind::head, {20, 5, 16, 20})};
  b.labeling = Labeling({0, 0, 0}, 1);
  const std::vector<SolvedBatch> batches{b};
  const StitchResult r = stitch(batches, priors);
  ASSERT_EQ(r.trajectories.size(), 1u);
  const auto& boxes = r.trajectories[0].boxes;
  EXPECT_FALSE(boxes.at(0).extrapolated);
  EXPECT_EQ(boxes.at(0).box.width, 40.0);
  ASSERT_TRUE(boxes.at(1).extrapolated);
  const Box e = boxes.at(1).box;
  EXPECT_DOUBLE_EQ(e.width, 40.0);
  EXPECT_DOUBLE_EQ(e.height, 100.0);
  // Head center back in standard coordinates lands on the expected position.
  const Point2 m = map_to_standard({28.0, 15.0}, e, priors.standard_box);
  EXPECT_NEAR(m.x, priors.spatial.expected_head.x, 1e-9);
  EXPECT_NEAR(m.y, priors.spatial.expected_head.y, 1e-9);
}

TEST(Stitch, RejectsMismatchedLabeling) {
  SolvedBatch b;
  b.frames = {0};
  b.nodes = {det(1, 0)};
  b.labeling = Labeling(2, 1);
  const std::vector<SolvedBatch> batches{b};
  EXPECT_THROW(stitch(batches, Priors{}), Error);
}

TEST(ExtrapolateBody, MatchesGeneratorGeometry) {
  ScenarioParams p;
  p.persons = 6;
  p.frames = 30;
  const Scenario sc = synthesize_scenario(63, p);
  const Priors priors = learn_priors(sc.head_body_pairs);
  for (const auto& [head, body] : sc.head_body_pairs) {
    EXPECT_GT(iou(extrapolate_body(head.box, priors), body.box), 0.7);
  }
}

TEST(Metrics, IdentityIsPerfect) {
  const std::vector<Trajectory> gt{line_track(1, 0, 9, 0), line_track(2, 0, 9, 300)};
  const Metrics m = evaluate_metrics(gt, gt);
  EXPECT_EQ(m.mota, 1.0);
  EXPECT_EQ(m.false_positives + m.false_negatives + m.id_switches, 0u);
  EXPECT_EQ(m.mostly_tracked, 2u);
  EXPECT_EQ(m.gt_boxes, 20u);
}

TEST(Metrics, HalfCoveredTrack) {
  const std::vector<Trajectory> gt{line_track(1, 0, 9, 0)};
  const std::vector<Trajectory> hyp{line_track(7, 0, 4, 0)};
  const Metrics m = evaluate_metrics(gt, hyp);
  EXPECT_EQ(m.false_negatives, 5u);
  EXPECT_EQ(m.false_positives, 0u);
  EXPECT_EQ(m.mota, 0.5);
  EXPECT_EQ(m.mostly_tracked, 0u);
  EXPECT_EQ(m.mostly_lost, 0u);
}

TEST(Metrics, SwapCountsOncePerReassignedTrack) {
  // Two tracks cross at frame 5; the hypothesis ids swap there.
  auto at = [](int f, bool left_to_right) {
    const double x = left_to_right ? 20.0 * f : 200.0 - 20.0 * f;
    return Box{x, 0, 40, 100};
  };
  Trajectory a, b, h1, h2;
  a.person_id = 1;
  b.person_id = 2;
  h1.person_id = 10;
  h2.person_id = 20;
  for (int f = 0; f < 10; ++f) {
    if (f == 5) continue;  // the crossing frame itself is not annotated
    a.boxes[f] = {at(f, true), false};
    b.boxes[f] = {at(f, false), false};
    const bool before = f < 5;
    h1.boxes[f] = {at(f, before), false};
    h2.boxes[f] = {at(f, !before), false};
  }
  const std::vector<Trajectory> gt{a, b}, hyp{h1, h2};
  const Metrics m = evaluate_metrics(gt, hyp);
  EXPECT_EQ(m.id_switches, 2u);
  EXPECT_EQ(m.false_positives, 0u);
  EXPECT_EQ(m.false_negatives, 0u);
  EXPECT_DOUBLE_EQ(m.mota, 1.0 - 2.0 / 18.0);
}

TEST(Metrics, MatchesPersistAboveThreshold) {
  // Hypothesis 2 overlaps a little better in frame 1 but the existing match persists.
  const std::vector<Trajectory> gt{track_of(1, {{0, {0, 0, 40, 100}}, {1, {0, 0, 40, 100}}})};
  const std::vector<Trajectory> hyp{track_of(1, {{0, {0, 0, 40, 100}}, {1, {4, 0, 40, 100}}}),
                                    track_of(2, {{1, {0, 0, 40, 100}}})};
  const Metrics m = evaluate_metrics(gt, hyp);
  EXPECT_EQ(m.id_switches, 0u);
  EXPECT_EQ(m.false_positives, 1u);
}

TEST(Metrics, FormulaIdentityOnRandomHypotheses) {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> jitter(-30.0, 30.0);
  std::uniform_int_distribution<int> coin(0, 4), pid(1, 6);
  std::vector<Trajectory> gt;
  for (int i = 0; i < 5; ++i) gt.push_back(line_track(i + 1, i, 20 + i, 150.0 * i));
  for (int trial = 0; trial < 50; ++trial) {
    std::map<int, Trajectory> hyp;
    for (const auto& t : gt) {
      for (const auto& [f, b] : t.boxes) {
        if (coin(rng) == 0) continue;
        const int id = pid(rng);
        auto& h = hyp[id];
        h.person_id = id;
        if (h.boxes.count(f)) continue;
        Box box = b.box;
        box.x += jitter(rng);
        h.boxes[f] = {box, false};
      }
    }
    std::vector<Trajectory> hv;
    for (auto& [id, t] : hyp) hv.push_back(t);
    const Metrics m = evaluate_metrics(gt, hv);
    const double expected = 1.0 - static_cast<double>(m.false_positives + m.false_negatives + m.id_switches) /
                                      static_cast<double>(m.gt_boxes);
    EXPECT_EQ(m.mota, expected);
    EXPECT_LE(m.mota, 1.0);
    EXPECT_LE(m.mostly_tracked + m.mostly_lost, m.gt_tracks);
    EXPECT_EQ(m.matches + m.false_negatives, m.gt_boxes);
  }
}

TEST(Metrics, ThresholdMustBeInsideTheUnitInterval) {
  EXPECT_THROW(evaluate_metrics({}, {}, 1.0), Error);
  EXPECT_THROW(evaluate_metrics({}, {}, 0.0), Error);
}

TEST(LoadDetections, WellFormedFile) {
  std::istringstream is(
      "frame,id,x,y,w,h,score,kind\n"
      "0,1,10,20,30,80,0.0,body\n"
      "0,2,15,22,10,12,2.0,head\n"
      "1,3,12,21,30,80,-1.0,body\n");
  const auto d = load_detections(is);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[1].kind, DetectorKind::head);
  EXPECT_EQ(d[2].frame, 1);
  EXPECT_EQ(d[0].probability, 0.5);
  EXPECT_GT(d[1].probability, d[0].probability);
  EXPECT_LT(d[2].probability, d[0].probability);
}

TEST(LoadDetections, NonPositiveWidthReportsTheLine) {
  std::istringstream is("frame,id,x,y,w,h,score,kind\n0,1,10,20,30,80,0.5,body\n0,2,10,20,0,80,0.5,body\n");
  try {
    load_detections(is);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadDetections, MalformedRows) {
  std::istringstream few("0,1,10,20,30\n"), kind("0,1,10,20,30,80,0.5,face\n"), num("0,1,x,20,30,80,0.5,body\n");
  EXPECT_THROW(load_detections(few), Error);
  EXPECT_THROW(load_detections(kind), Error);
  EXPECT_THROW(load_detections(num), Error);
}

TEST(LoadDetections, CalibrationMidpoint) {
  std::istringstream is("0,1,10,20,30,80,3.5,body\n0,2,10,20,30,80,4.5,body\n");
  const auto d = load_detections(is, ScoreCalibration{2.0, 3.5});
  EXPECT_EQ(d[0].probability, 0.5);
  EXPECT_NEAR(d[1].probability, sigmoid(2.0), 1e-15);
}

TEST(DetectionsFile, RoundTrip) {
  const Scenario sc = synthesize_scenario(65, occlusion_suite_params());
  std::stringstream ss;
  write_detections(ss, sc.detections);
  const auto back = load_detections(ss);
  ASSERT_EQ(back.size(), sc.detections.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, sc.detections[i].id);
    EXPECT_EQ(back[i].kind, sc.detections[i].kind);
    EXPECT_NEAR(back[i].box.x, sc.detections[i].box.x, 5e-4);  // written with 3 decimals
  }
}

TEST(TrajectoriesFile, RoundTrip) {
  std::vector<Trajectory> t{line_track(1, 0, 3, 10.25), line_track(2, 2, 5, 300.5)};
  t[1].boxes[4].extrapolated = true;
  std::stringstream ss;
  write_trajectories(ss, t);
  const auto back = load_trajectories(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].boxes.size(), 4u);
  EXPECT_EQ(back[0].boxes.at(2).box.x, 10.25);
  EXPECT_TRUE(back[1].boxes.at(4).extrapolated);
  std::istringstream dup("frame,person_id,x,y,w,h,flag\n0,1,0,0,1,1,0\n0,1,0,0,1,1,0\n");
  EXPECT_THROW(load_trajectories(dup), Error);
}

TEST(Synth, SameSeedSameBytes) {
  const auto p = occlusion_suite_params();
  const Scenario a = synthesize_scenario(66, p), b = synthesize_scenario(66, p), c = synthesize_scenario(67, p);
  auto bytes = [](const Scenario& s) {
    std::ostringstream os;
    write_detections(os, s.detections);
    write_correspondences(os, s.correspondences);
    write_trajectories(os, s.ground_truth);
    return os.str();
  };
  EXPECT_EQ(bytes(a), bytes(b));
  EXPECT_NE(bytes(a), bytes(c));
}

TEST(Synth, OcclusionLosesBodiesThatHeadsRecover) {
  const Scenario sc = synthesize_scenario(68, occlusion_suite_params());
  EXPECT_GT(sc.body_missed_occluded, 0u);
  const Scenario bo = body_only(sc);
  for (const auto& d : bo.detections) EXPECT_EQ(d.kind, DetectorKind::body);
  EXPECT_LT(bo.detections.size(), sc.detections.size());
  for (const auto& c : bo.correspondences) {
    EXPECT_TRUE(std::any_of(bo.detections.begin(), bo.detections.end(),
                            [&](const Detection& d) { return d.frame == c.frame_a && d.id == c.id_a; }));
  }
}

TEST(Synth, CleanScenarioIsConsistent) {
  ScenarioParams p;
  const Scenario sc = synthesize_scenario(69, p);
  ASSERT_EQ(sc.person_of.size(), sc.detections.size());
  std::size_t gt_boxes = 0;
  for (const auto& t : sc.ground_truth) gt_boxes += t.boxes.size();
  // Every ground-truth box has one body and one head detection.
  EXPECT_EQ(sc.detections.size(), 2 * gt_boxes);
  for (int who : sc.person_of) EXPECT_GE(who, 0);
  EXPECT_EQ(sc.head_body_pairs.size(), gt_boxes);
}

TEST(Track, CleanSmallScenarioIsPerfect) {
  ScenarioParams p;
  p.persons = 4;
  p.frames = 20;
  const Scenario train = synthesize_scenario(70, p), test = synthesize_scenario(71, p);
  const Priors priors = learn_priors(train.head_body_pairs);
  const AffinityModel model = train_model(training_samples(train, priors, p.temporal_window));
  const TrackingOutput out = track(test.detections, CorrespondenceTable(test.correspondences), model, priors, {});
  const Metrics m = evaluate_metrics(test.ground_truth, out.trajectories);
  EXPECT_EQ(m.mota, 1.0);

  // Trajectory invariants: each detection in at most one trajectory.
  std::set<int> ids;
  for (const auto& t : out.trajectories) {
    for (int id : t.detection_ids) EXPECT_TRUE(ids.insert(id).second) << "detection " << id;
  }
}

TEST(Track, SmallBatchesStitchAcrossBoundaries) {
  ScenarioParams p;
  p.persons = 3;
  p.frames = 30;
  const Scenario train = synthesize_scenario(72, p), test = synthesize_scenario(73, p);
  const Priors priors = learn_priors(train.head_body_pairs);
  const AffinityModel model = train_model(training_samples(train, priors, p.temporal_window));
  PipelineConfig cfg;
  cfg.batch_max_nodes = 60;
  const TrackingOutput out = track(test.detections, CorrespondenceTable(test.correspondences), model, priors, cfg);
  EXPECT_GT(out.batches.size(), 2u);
  const Metrics m = evaluate_metrics(test.ground_truth, out.trajectories);
  EXPECT_EQ(m.id_switches, 0u);
  EXPECT_EQ(m.mota, 1.0);
}
