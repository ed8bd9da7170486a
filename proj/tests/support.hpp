#pragma once

// Test-only helpers: dense-matrix reference evaluations and random inputs.

#include <random>
#include <vector>

#include "fwtrack/graph.hpp"

namespace fwtrack::testing {

/// Full nP × nP matrix Q with P identical copies of the pairwise block.
inline std::vector<std::vector<double>> dense_q(const TrackingGraph& g, int P) {
  const std::size_t N = g.size() * static_cast<std::size_t>(P);
  std::vector<std::vector<double>> Q(N, std::vector<double>(N, 0.0));
  for (std::size_t u = 0; u < g.size(); ++u) {
    for (std::size_t v = 0; v < g.size(); ++v) {
      const double q = g.pairwise(u, v);
      for (int k = 0; k < P; ++k) Q[u * P + k][v * P + k] = q;
    }
  }
  return Q;
}

inline std::vector<double> dense_c(const TrackingGraph& g, int P) {
  std::vector<double> c;
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (int k = 0; k < P; ++k) c.push_back(g.unary(v));
  }
  return c;
}

inline double dense_objective(const TrackingGraph& g, const std::vector<double>& x, int P) {
  const auto Q = dense_q(g, P);
  const auto c = dense_c(g, P);
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lin += c[i] * x[i];
    for (std::size_t j = 0; j < x.size(); ++j) quad += x[i] * Q[i][j] * x[j];
  }
  return 0.5 * quad + lin;
}

inline std::vector<double> dense_gradient(const TrackingGraph& g, const std::vector<double>& x, int P, double lambda) {
  const auto Q = dense_q(g, P);
  const auto c = dense_c(g, P);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = c[i] + lambda * (2.0 * x[i] - 1.0);
    for (std::size_t j = 0; j < x.size(); ++j) s += Q[i][j] * x[j];
    out[i] = s;
  }
  return out;
}

inline double dense_quadratic_form(const TrackingGraph& g, const std::vector<double>& d, int P, double lambda) {
  const auto Q = dense_q(g, P);
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    s += 2.0 * lambda * d[i] * d[i];
    for (std::size_t j = 0; j < d.size(); ++j) s += d[i] * Q[i][j] * d[j];
  }
  return s;
}

/// Feasible fractional point: per node, a random split of mass ≤ 1.
inline RelaxedPoint random_point(std::mt19937_64& rng, std::size_t n, int P) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> x;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> w(static_cast<std::size_t>(P) + 1);
    double total = 0.0;
    for (auto& e : w) total += (e = expo(rng));
    for (int k = 0; k < P; ++k) x.push_back(w[static_cast<std::size_t>(k)] / total);
  }
  return RelaxedPoint(n, P, std::move(x));
}

inline Labeling random_labeling(std::mt19937_64& rng, std::size_t n, int P) {
  std::uniform_int_distribution<int> pick(-1, P - 1);
  std::vector<int> labels(n);
  for (auto& l : labels) l = pick(rng);
  return Labeling(std::move(labels), P);
}

}  // namespace fwtrack::testing
