#include <gtest/gtest.h>

#include <random>

#include "fwtrack/fw_solver.hpp"
#include "fwtrack/oracles.hpp"
#include "fwtrack/synth.hpp"
#include "support.hpp"

using namespace fwtrack;

TEST(Exact, RepulsivePairIsSeparated) {
  const auto g = TrackingGraph::from_costs({-1.0, -1.0}, {{0, 1, 3.0}});
  const ExactSolution s = exact_partition_solver(g, 2);
  EXPECT_EQ(s.objective, -2.0);
  EXPECT_NE(s.labeling.raw(0), s.labeling.raw(1));
  EXPECT_FALSE(s.labeling.rejected(0));
  EXPECT_FALSE(s.labeling.rejected(1));
}

TEST(Exact, PositiveCostsGiveEmptyLabeling) {
  const auto g = TrackingGraph::from_costs({1.0, 0.5, 2.0}, {{0, 1, 1.0}, {1, 2, 0.5}});
  const ExactSolution s = exact_partition_solver(g, 3);
  EXPECT_EQ(s.objective, 0.0);
  EXPECT_EQ(s.labeling.used_label_count(), 0u);
}

TEST(Exact, LabelCapIsRespected) {
  const auto g = TrackingGraph::from_costs({-1.0, -1.0, -1.0}, {{0, 1, 5.0}, {0, 2, 5.0}, {1, 2, -1.0}});
  const ExactSolution two = exact_partition_solver(g, 2);
  const ExactSolution one = exact_partition_solver(g, 1);
  EXPECT_EQ(two.objective, -4.0);
  EXPECT_EQ(one.objective, -3.0);
  EXPECT_EQ(brute_force_labeling(g, 1).objective, -3.0);
  EXPECT_LE(one.labeling.used_label_count(), 1u);
}

TEST(Exact, ObjectiveMatchesLabeling) {
  for (int seed = 0; seed < 30; ++seed) {
    const auto g = random_instance(2000 + seed, 10, 0.6);
    const ExactSolution s = exact_partition_solver(g, 4);
    EXPECT_EQ(s.objective, labeling_objective(g, s.labeling));
  }
}

TEST(Exact, EqualsFullEnumerationUpToSevenNodes) {
  for (int seed = 0; seed < 120; ++seed) {
    const std::size_t n = 1 + seed % 7;
    const int P = 1 + seed % 3;
    const auto g = random_instance(2100 + seed, n, 0.7);
    EXPECT_NEAR(exact_partition_solver(g, P).objective, brute_force_labeling(g, P).objective, 1e-12)
        << "seed " << seed << " n " << n << " P " << P;
  }
}

TEST(Exact, SixteenNodesIsTractable) {
  const auto g = random_instance(7, 16, 0.5);
  const ExactSolution s = exact_partition_solver(g, 16);
  EXPECT_EQ(s.objective, labeling_objective(g, s.labeling));
  EXPECT_LE(s.objective, solve_with_schedule(g, SolverConfig{}).best_objective);
}

TEST(Exact, GuardsInstanceSize) {
  const auto g = random_instance(1, 17, 0.1);
  EXPECT_THROW(exact_partition_solver(g, 2), Error);
  EXPECT_THROW(exact_partition_solver(random_instance(1, 3, 0.5), 0), Error);
}

TEST(Exact, BoundIsAdmissible) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + trial % 4;
    const int P = 1 + trial % 3;
    const auto g = random_instance(2200 + trial, n, 0.8);
    const auto adj = symmetric_adjacency(g);
    // Random partial partition: decided nodes take canonical block ids.
    std::vector<int> partial(n, kUndecided);
    int blocks = 0;
    std::uniform_int_distribution<int> coin(0, 2);
    for (std::size_t v = 0; v < n; ++v) {
      const int c = coin(rng);
      if (c == 0) continue;
      if (c == 1) {
        partial[v] = Labeling::kRejected;
        continue;
      }
      std::uniform_int_distribution<int> pick(0, std::min(blocks, P - 1));
      partial[v] = pick(rng);
      blocks = std::max(blocks, partial[v] + 1);
    }
    const double bound = partition_lower_bound(g, partial, adj);

    // Best completion: undecided nodes range over reject and every label.
    double best = std::numeric_limits<double>::infinity();
    for_each_vertex(n, P, [&](const Labeling& l) {
      for (std::size_t v = 0; v < n; ++v) {
        if (partial[v] != kUndecided && l.raw(v) != partial[v]) return;
      }
      best = std::min(best, labeling_objective(g, l));
    });
    EXPECT_LE(bound, best + 1e-12) << "trial " << trial;
  }
}

TEST(Exact, BoundIsExactOnCompleteAssignments) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_instance(2300 + trial, 6, 0.7);
    const Labeling l = fwtrack::testing::random_labeling(rng, 6, 3);
    EXPECT_NEAR(partition_lower_bound(g, l.raw(), symmetric_adjacency(g)), labeling_objective(g, l), 1e-12);
  }
}

TEST(GridLineSearch, Parabola) {
  const auto r = grid_line_search([](double t) { return (t - 0.5) * (t - 0.5); }, 100000);
  EXPECT_NEAR(r.gamma, 0.5, 1e-5);
}

TEST(GridLineSearch, DecreasingLine) {
  EXPECT_EQ(grid_line_search([](double t) { return 3.0 - 2.0 * t; }, 11).gamma, 1.0);
}

TEST(GridLineSearch, AgreesWithClosedForm) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double g = unit(rng), delta = unit(rng);
    auto om = [&](double t) { return g * t + 0.5 * delta * t * t; };
    const double closed = om(optimal_step_size(g, delta, om(0.0), om(1.0)));
    EXPECT_LE(closed, grid_line_search(om, 10001).value + 1e-9);
  }
}

TEST(GridLineSearch, NeedsTwoPoints) {
  EXPECT_THROW(grid_line_search([](double t) { return t; }, 1), Error);
}

TEST(EnumerateBinarize, BinaryInputIsFixed) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const Labeling l = fwtrack::testing::random_labeling(rng, 4, 2);
    EXPECT_EQ(enumerate_binarize(labeling_to_point(l)), l);
  }
}

TEST(EnumerateBinarize, LexicographicTieBreak) {
  const RelaxedPoint x(1, 2, {0.6, 0.6});
  const Labeling l = enumerate_binarize(x);
  EXPECT_EQ(l.raw(0), 0);
  EXPECT_NEAR(squared_distance(x, l), 0.52, 1e-12);
  EXPECT_NEAR(squared_distance(x, Labeling(1, 2)), 0.72, 1e-12);
}

TEST(EnumerateBinarize, AgreesWithBinarize) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 5;
    const int P = 1 + trial % 3;
    const auto x = fwtrack::testing::random_point(rng, n, P);
    EXPECT_EQ(enumerate_binarize(x), binarize(x));
  }
}

TEST(EnumerateBinarize, GuardsInstanceSize) {
  EXPECT_THROW(enumerate_binarize(RelaxedPoint(20, 3)), Error);
}

TEST(ForEachVertex, CountsAllVertices) {
  int count = 0;
  for_each_vertex(3, 2, [&](const Labeling&) { ++count; });
  EXPECT_EQ(count, 27);
}
