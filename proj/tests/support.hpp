#pragma once

// Random models and games shared by the unit and acceptance tests.

#include <cmath>
#include <random>
#include <vector>

#include "masattr/graph.hpp"
#include "masattr/scm.hpp"
#include "masattr/shapley.hpp"

namespace masattr::testing {

inline std::vector<NodeInfo> plain_nodes(std::size_t n) {
  std::vector<NodeInfo> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, "A" + std::to_string(i % 3), static_cast<double>(i)});
  return out;
}

// Random forward DAG over n nodes with edge probability p.
inline DiGraph random_forward_dag(std::size_t n, double p, std::mt19937_64& rng) {
  DiGraph g(plain_nodes(n));
  std::bernoulli_distribution edge(p);
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (edge(rng)) g.add_edge(i, j);
    }
  }
  return g;
}

// Linear SCM with weights in [-1, 1], intercepts in [0, 0.5], noise scales in [0, 0.2].
inline StructuralModel random_scm(std::size_t n, std::mt19937_64& rng, double alpha = 0.0, double p = 0.3) {
  auto g = random_forward_dag(n, p, rng);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::uniform_real_distribution<double> b(0.0, 0.5);
  std::uniform_real_distribution<double> s(0.0, 0.2);
  std::uniform_real_distribution<double> phi(-0.5, 0.5);
  std::vector<Mechanism> mechs(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto& m = mechs[j];
    m.node = j;
    m.parents = g.parents(j);
    for (std::size_t k = 0; k < m.parents.size(); ++k) m.parent_weights.push_back(w(rng));
    m.intercept = b(rng);
    m.noise_scale = s(rng);
    m.amplification_alpha = alpha;
    m.shapley_value = alpha > 0 ? phi(rng) : 0.0;
  }
  auto readout = mean_sink_readout(g);
  return StructuralModel(std::move(g), std::move(mechs), std::move(readout));
}

// Plain additive linear SCM evaluation, independent of the engine.
inline std::vector<double> reference_values(const StructuralModel& m, const std::vector<double>& noise) {
  const std::size_t n = m.size();
  std::vector<double> x(n, 0.0);
  std::vector<bool> done(n, false);
  std::size_t remaining = n;
  while (remaining > 0) {
    for (std::size_t j = 0; j < n; ++j) {
      if (done[j]) continue;
      const auto& mech = m.mechanisms()[j];
      bool ready = true;
      for (auto p : mech.parents) ready = ready && done[p];
      if (!ready) continue;
      double v = mech.intercept + noise[j];
      for (std::size_t k = 0; k < mech.parents.size(); ++k) v += mech.parent_weights[k] * x[mech.parents[k]];
      x[j] = v;
      done[j] = true;
      --remaining;
    }
  }
  return x;
}

// Weighted edge (from, to, weight) with from < to.
struct WeightedEdge {
  std::size_t from;
  std::size_t to;
  double weight;
};

// n samples of x_j = sum w * x_parent + N(0, 1), variables in index order.
inline Eigen::MatrixXd sample_linear_gaussian(std::size_t p, const std::vector<WeightedEdge>& edges, std::size_t n,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t j = 0; j < p; ++j) {
      double v = normal(rng);
      for (const auto& e : edges) {
        if (e.to == j) v += e.weight * x(row, static_cast<Eigen::Index>(e.from));
      }
      x(row, static_cast<Eigen::Index>(j)) = v;
    }
  }
  return x;
}

// v(S) = sum of per-player values plus pairwise interactions, v(empty) = 0.
// Its Shapley value has the closed form solo_i + half of every interaction involving i.
struct PairGame {
  std::vector<double> solo;
  std::vector<std::vector<double>> pair;

  PairGame(std::size_t players, std::mt19937_64& rng) : solo(players), pair(players, std::vector<double>(players, 0.0)) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : solo) v = normal(rng);
    for (std::size_t i = 0; i < players; ++i) {
      for (std::size_t j = i + 1; j < players; ++j) pair[i][j] = 0.5 * normal(rng);
    }
  }

  double value(Coalition s) const {
    double v = 0.0;
    for (std::size_t i = 0; i < solo.size(); ++i) {
      if (!(s >> i & 1)) continue;
      v += solo[i];
      for (std::size_t j = i + 1; j < solo.size(); ++j) {
        if (s >> j & 1) v += pair[i][j];
      }
    }
    return v;
  }

  std::vector<double> shapley() const {
    std::vector<double> phi = solo;
    for (std::size_t i = 0; i < solo.size(); ++i) {
      for (std::size_t j = i + 1; j < solo.size(); ++j) {
        phi[i] += 0.5 * pair[i][j];
        phi[j] += 0.5 * pair[i][j];
      }
    }
    return phi;
  }

  CoalitionGame game() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < solo.size(); ++i) names.push_back("p" + std::to_string(i));
    return CoalitionGame(std::move(names), [copy = *this](Coalition s) { return copy.value(s); });
  }
};

}  // namespace masattr::testing
