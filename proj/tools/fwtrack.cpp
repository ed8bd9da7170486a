// fwtrack command line: solve, eval, synth, train, trace.
//
// Log verbosity comes from FWTRACK_LOG (trace, debug, info, warn, error, off).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fwtrack/fwtrack.hpp"

namespace fs = std::filesystem;
using namespace fwtrack;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("fwtrack");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FWTRACK_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void add_solver_flags(CLI::App* cmd, SolverConfig& c) {
  cmd->add_option("--max-iterations", c.max_iterations, "FW iteration cap")->capture_default_str();
  cmd->add_option("--gap-tolerance", c.gap_tolerance, "FW duality gap tolerance")->capture_default_str();
  cmd->add_option("--max-labels", c.max_labels, "number of labels P")->capture_default_str();
  cmd->add_option("--lambda-halvings-max", c.lambda_halvings_max, "maximal number of lambda halvings")
      ->capture_default_str();
  cmd->add_option("--short-run-threshold", c.short_run_threshold, "halve lambda when a run needs fewer iterations")
      ->capture_default_str();
  cmd->add_option("--away-steps", c.away_steps, "use away steps")->capture_default_str();
  cmd->add_option("--active-set-drop-tolerance", c.active_set_drop_tolerance, "drop vertices below this weight")
      ->capture_default_str();
  cmd->add_option("--include-plain-run", c.include_plain_run, "also run unregularized FW in the schedule")
      ->capture_default_str();
  cmd->add_option("--gradient-refresh-interval", c.gradient_refresh_interval,
                  "iterations between exact gradient recomputations")
      ->capture_default_str();
  cmd->add_option("--exact-threshold", c.exact_threshold, "solve contracted problems exactly up to this size")
      ->capture_default_str();
  cmd->add_option("--reconsider-positive-rejected", c.reconsider_positive_rejected,
                  "reconsider rejected nodes with positive rather than negative unary cost")
      ->capture_default_str();
  cmd->add_option("--hierarchy-max-iterations", c.hierarchy_max_iterations, "hierarchy iteration cap")
      ->capture_default_str();
}

template <typename F>
void write_file(const std::string& path, F&& body) {
  auto os = detail::open_output(path);
  body(os);
  if (!os) throw Error("failed writing '" + path + "'");
}

template <typename F>
auto read_file(const std::string& path, F&& body) {
  auto is = detail::open_input(path);
  return body(is);
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string detections, correspondences, model, priors, output, report;
  std::string kinds = "both";
  double score_scale = 1.0, score_offset = 0.0;
  PipelineConfig config;
};

int run_solve(const SolveArgs& a) {
  a.config.solver.validate();
  auto detections = load_detections(a.detections, {a.score_scale, a.score_offset});
  if (a.kinds != "both") {
    const DetectorKind keep = a.kinds == "body" ? DetectorKind::body : DetectorKind::head;
    std::erase_if(detections, [&](const Detection& d) { return d.kind != keep; });
  }
  const auto rows = a.correspondences.empty() ? std::vector<Correspondence>{} : load_correspondences(a.correspondences);
  const CorrespondenceTable table(rows);
  const AffinityModel model = read_file(a.model, [](std::istream& is) { return read_model(is); });
  const Priors priors = read_file(a.priors, [](std::istream& is) { return read_priors(is); });
  spdlog::info("{} detections, {} correspondence rows", detections.size(), rows.size());

  const TrackingOutput out = track(detections, table, model, priors, a.config);
  for (std::size_t b = 0; b < out.batches.size(); ++b) {
    const auto& r = out.batches[b];
    spdlog::info("batch {}: {} nodes, {} edges, FW+lambda {:.6g}, +h {:.6g}", b, r.nodes, r.edges, r.fw_objective,
                 r.objective);
    if (r.missing_correspondences > 0) {
      spdlog::debug("batch {}: {} in-window pairs without correspondence rows", b, r.missing_correspondences);
    }
  }
  for (const auto& note : out.notes) spdlog::warn("{}", note);
  write_file(a.output, [&](std::ostream& os) { write_trajectories(os, out.trajectories); });
  if (!a.report.empty()) {
    write_file(a.report, [&](std::ostream& os) {
      os << "batch,nodes,edges,oversized,fw_objective,objective,missing_correspondences\n";
      for (std::size_t b = 0; b < out.batches.size(); ++b) {
        const auto& r = out.batches[b];
        fmt::print(os, "{},{},{},{},{:.12g},{:.12g},{}\n", b, r.nodes, r.edges, r.oversized ? 1 : 0, r.fw_objective,
                   r.objective, r.missing_correspondences);
      }
    });
  }
  spdlog::info("{} trajectories written to {}", out.trajectories.size(), a.output);
  return 0;
}

struct EvalArgs {
  std::string ground_truth, trajectories, output;
  double iou_threshold = 0.5;
};

int run_eval(const EvalArgs& a) {
  const auto gt = load_trajectories(a.ground_truth);
  const auto hyp = load_trajectories(a.trajectories);
  const Metrics m = evaluate_metrics(gt, hyp, a.iou_threshold);
  auto emit = [&](std::ostream& os) {
    os << "mota,fp,fn,ids,mt,ml,gt_tracks,gt_boxes\n";
    fmt::print(os, "{:.6f},{},{},{},{},{},{},{}\n", m.mota, m.false_positives, m.false_negatives, m.id_switches,
               m.mostly_tracked, m.mostly_lost, m.gt_tracks, m.gt_boxes);
  };
  if (a.output.empty()) {
    emit(std::cout);
  } else {
    write_file(a.output, emit);
  }
  return 0;
}

struct SynthArgs {
  std::uint64_t seed = 1;
  std::uint64_t training_seed = 0;  // 0: seed + 1000003
  std::string out_dir = ".";
  ScenarioParams params = occlusion_suite_params();
  bool clean = false;
};

int run_synth(SynthArgs a) {
  if (a.clean) {
    const int persons = a.params.persons, frames = a.params.frames;
    a.params = ScenarioParams{};
    a.params.persons = persons;
    a.params.frames = frames;
  }
  fs::create_directories(a.out_dir);
  const Scenario sc = synthesize_scenario(a.seed, a.params);
  const std::uint64_t tseed = a.training_seed != 0 ? a.training_seed : a.seed + 1000003;
  const Scenario training = synthesize_scenario(tseed, a.params);
  const Priors priors = learn_priors(training.head_body_pairs);
  const TrainingSet set = training_samples(training, priors, a.params.temporal_window);
  const fs::path dir(a.out_dir);
  write_file((dir / "detections.csv").string(), [&](std::ostream& os) { write_detections(os, sc.detections); });
  write_file((dir / "correspondences.csv").string(),
             [&](std::ostream& os) { write_correspondences(os, sc.correspondences); });
  write_file((dir / "gt.csv").string(), [&](std::ostream& os) { write_trajectories(os, sc.ground_truth); });
  write_file((dir / "priors.txt").string(), [&](std::ostream& os) { write_priors(os, priors); });
  write_file((dir / "features.csv").string(), [&](std::ostream& os) { write_training_set(os, set); });
  spdlog::info("scenario seed {}: {} detections, {} correspondences, {} persons", a.seed, sc.detections.size(),
               sc.correspondences.size(), sc.ground_truth.size());
  return 0;
}

struct TrainArgs {
  std::string features, output;
  LogisticFitOptions options;
};

int run_train(const TrainArgs& a) {
  const TrainingSet set = read_file(a.features, [](std::istream& is) { return load_training_set(is); });
  const AffinityModel model = train_model(set, a.options);
  write_file(a.output, [&](std::ostream& os) { write_model(os, model); });
  return 0;
}

struct TraceArgs {
  std::string instance, output, hierarchy_output;
  std::uint64_t seed = 1;
  std::size_t nodes = 12;
  double density = 0.7;
  SolverConfig config;
};

int run_trace(TraceArgs a) {
  a.config.validate();
  const TrackingGraph graph = a.instance.empty()
                                  ? random_instance(a.seed, a.nodes, a.density)
                                  : read_file(a.instance, [](std::istream& is) { return read_instance(is); });
  if (graph.empty()) throw Error("trace: empty instance");

  SolverConfig plain = a.config;
  plain.lambda_halvings_max = 0;
  plain.include_plain_run = false;
  const FwResult fw = solve_fw(graph, plain, RelaxedPoint(graph.size(), plain.max_labels), 0.0);
  const FwResult fw_lambda = solve_with_schedule(graph, a.config);
  const auto start = std::chrono::steady_clock::now();
  const HierarchyResult h = solve_hierarchical(graph, fw_lambda.best_binary, a.config);
  const double h_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  auto emit = [&](std::ostream& os) {
    os << "method,wall_seconds,best_objective,gap,lambda\n";
    write_trace_csv(os, fw.trace, "fw");
    write_trace_csv(os, fw_lambda.trace, "fw_lambda");
    // The hierarchy continues from the end of the FW+lambda run.
    const double t0 = fw_lambda.trace.empty() ? 0.0 : fw_lambda.trace.back().wall_seconds;
    fmt::print(os, "fw_lambda_h,{:.6f},{:.12g},{:.6g},{:.6g}\n", t0, fw_lambda.best_objective, 0.0, 0.0);
    fmt::print(os, "fw_lambda_h,{:.6f},{:.12g},{:.6g},{:.6g}\n", t0 + h_seconds, h.objective, 0.0, 0.0);
    if (graph.size() <= kExactSolverMaxNodes) {
      const ExactSolution exact = exact_partition_solver(graph, a.config.max_labels);
      fmt::print(os, "exact,{:.6f},{:.12g},{:.6g},{:.6g}\n", 0.0, exact.objective, 0.0, 0.0);
    }
  };
  if (a.output.empty()) {
    emit(std::cout);
  } else {
    write_file(a.output, emit);
  }
  if (!a.hierarchy_output.empty()) {
    write_file(a.hierarchy_output, [&](std::ostream& os) { write_hierarchy_csv(os, h.iterations); });
  }
  spdlog::info("FW {:.9g}, FW+lambda {:.9g}, FW+lambda+h {:.9g}", fw.best_objective, fw_lambda.best_objective,
               h.objective);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Multi-detector tracking by Frank-Wolfe graph labeling"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "detections + correspondences + model -> trajectories");
  s->add_option("--detections", solve.detections, "detections CSV")->required();
  s->add_option("--correspondences", solve.correspondences, "correspondence CSV");
  s->add_option("--model", solve.model, "model file")->required();
  s->add_option("--priors", solve.priors, "prior file")->required();
  s->add_option("-o,--output", solve.output, "trajectory CSV")->required();
  s->add_option("--report", solve.report, "per-batch report CSV");
  s->add_option("--kinds", solve.kinds, "detector kinds to use")
      ->check(CLI::IsMember({"both", "body", "head"}))
      ->capture_default_str();
  s->add_option("--score-scale", solve.score_scale, "score calibration scale")->capture_default_str();
  s->add_option("--score-offset", solve.score_offset, "score calibration offset")->capture_default_str();
  s->add_option("--window", solve.config.costs.temporal_window, "temporal window in frames")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  s->add_option("--repulsion", solve.config.costs.repulsion_cost, "same-frame same-detector cost")
      ->capture_default_str();
  s->add_option("--batch-nodes", solve.config.batch_max_nodes, "maximal detections per batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_solver_flags(s, solve.config.solver);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "trajectories + ground truth -> metrics CSV");
  e->add_option("--ground-truth", eval.ground_truth, "ground-truth trajectory CSV")->required();
  e->add_option("--trajectories", eval.trajectories, "hypothesis trajectory CSV")->required();
  e->add_option("--iou", eval.iou_threshold, "IoU match threshold")->capture_default_str();
  e->add_option("-o,--output", eval.output, "metrics CSV (default stdout)");

  SynthArgs synth;
  auto* y = app.add_subcommand("synth", "seed + parameters -> scenario files");
  y->add_option("--seed", synth.seed)->capture_default_str();
  y->add_option("--training-seed", synth.training_seed, "seed of the training scenario (default seed+1000003)");
  y->add_option("--out-dir", synth.out_dir)->capture_default_str();
  y->add_option("--persons", synth.params.persons)->capture_default_str();
  y->add_option("--frames", synth.params.frames)->capture_default_str();
  y->add_option("--occlusion-rate", synth.params.occlusion_rate)->capture_default_str();
  y->add_option("--body-miss-occluded", synth.params.body_miss_rate_occluded)->capture_default_str();
  y->add_option("--body-miss", synth.params.body_miss_rate)->capture_default_str();
  y->add_option("--head-miss", synth.params.head_miss_rate)->capture_default_str();
  y->add_option("--false-positives", synth.params.false_positive_rate, "spurious bodies per frame")
      ->capture_default_str();
  y->add_option("--head-false-positives", synth.params.head_false_positive_rate, "spurious heads per frame")
      ->capture_default_str();
  y->add_option("--noise", synth.params.localization_noise)->capture_default_str();
  y->add_option("--window", synth.params.temporal_window)->capture_default_str();
  y->add_flag("--clean", synth.clean, "noise-free scenario without misses or false positives");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "labeled feature file -> model file");
  t->add_option("--features", train.features)->required();
  t->add_option("-o,--output", train.output)->required();
  t->add_option("--l2", train.options.l2)->capture_default_str();
  t->add_option("--gradient-tolerance", train.options.gradient_tolerance)->capture_default_str();
  t->add_option("--max-steps", train.options.max_steps)->capture_default_str();

  TraceArgs trace;
  auto* r = app.add_subcommand("trace", "FW, FW+lambda, FW+lambda+h and exact objective traces on one instance");
  r->add_option("--instance", trace.instance, "instance file (default: random instance)");
  r->add_option("--seed", trace.seed)->capture_default_str();
  r->add_option("--nodes", trace.nodes)->capture_default_str();
  r->add_option("--density", trace.density)->capture_default_str();
  r->add_option("-o,--output", trace.output, "trace CSV (default stdout)");
  r->add_option("--hierarchy-output", trace.hierarchy_output, "per-iteration hierarchy CSV");
  add_solver_flags(r, trace.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }
  try {
    if (*s) return run_solve(solve);
    if (*e) return run_eval(eval);
    if (*y) return run_synth(synth);
    if (*t) return run_train(train);
    if (*r) return run_trace(trace);
  } catch (const std::exception& ex) {
    spdlog::error("{}", ex.what());
    return 1;
  }
  return 1;
}
