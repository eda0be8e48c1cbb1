#include <doctest.h>

#include <cmath>
#include <random>

#include "masattr/errors.hpp"
#include "masattr/scm.hpp"
#include "support.hpp"

using namespace masattr;
using masattr::testing::plain_nodes;

namespace {

StructuralModel chain(std::size_t n, double w, double alpha, std::vector<double> phi = {}) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  DiGraph g(plain_nodes(n), edges);
  std::vector<Mechanism> mechs(n);
  for (std::size_t j = 0; j < n; ++j) {
    mechs[j].node = j;
    mechs[j].parents = g.parents(j);
    mechs[j].parent_weights.assign(mechs[j].parents.size(), w);
    mechs[j].amplification_alpha = alpha;
    mechs[j].shapley_value = phi.empty() ? 0.0 : phi[j];
  }
  auto readout = mean_sink_readout(g);
  return StructuralModel(std::move(g), std::move(mechs), std::move(readout));
}

NoiseVector noise_of(std::vector<double> nodes, double outcome = 0.0) { return {std::move(nodes), outcome}; }

}  // namespace

TEST_CASE("two-node chain without amplification") {
  const auto m = chain(2, 1.0, 0.0);
  const auto r = simulate(m, noise_of({0.2, 0.0}));
  CHECK(r.values[0] == doctest::Approx(0.2));
  CHECK(r.values[1] == doctest::Approx(0.2));
  CHECK(r.outcome == doctest::Approx(0.2));
}

TEST_CASE("amplification multiplies by exp(alpha * phi)") {
  const auto m = chain(2, 1.0, 0.5, {0.0, 1.0});
  const auto r = simulate(m, noise_of({0.2, 0.0}));
  CHECK(r.values[1] == doctest::Approx(0.2 * std::exp(0.5)).epsilon(1e-12));
}

TEST_CASE("same seed gives identical realizations") {
  std::mt19937_64 rng(10);
  const auto m = masattr::testing::random_scm(10, rng, 0.5);
  const auto a = simulate(m, 1234);
  const auto b = simulate(m, 1234);
  CHECK(a.values == b.values);
  CHECK(a.outcome == b.outcome);
  CHECK(sample_noise(m, 1234).nodes == sample_noise(m, 1234).nodes);
}

TEST_CASE("intervening on the root of a weight-one chain") {
  const auto m = chain(3, 1.0, 0.0);
  const auto noise = noise_of({0.4, 0.0, 0.0});
  const auto r = do_intervene(m, {{{0, 0.0}}, {}}, noise);
  CHECK(r.values == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(r.outcome == 0.0);
}

TEST_CASE("intervening on a sink only changes the outcome") {
  const auto m = chain(3, 0.5, 0.0);
  const auto noise = noise_of({0.4, 0.1, 0.1});
  const auto base = simulate(m, noise);
  const auto r = do_intervene(m, {{{2, 0.9}}, {}}, noise);
  CHECK(r.values[0] == base.values[0]);
  CHECK(r.values[1] == base.values[1]);
  CHECK(r.values[2] == 0.9);
  CHECK(r.outcome == doctest::Approx(0.9));
}

TEST_CASE("mid-chain intervention on five nodes") {
  // x0 = 0.5, x1 = 0.8 x0 + 0.1, do(x2 = 0.3), x3 = 0.8 x2 + 0.1, x4 = 0.8 x3 + 0.1
  const auto m = chain(5, 0.8, 0.0);
  const auto noise = noise_of({0.5, 0.1, 0.1, 0.1, 0.1});
  const auto r = do_intervene(m, {{{2, 0.3}}, {}}, noise);
  CHECK(r.values[1] == doctest::Approx(0.5));
  CHECK(r.values[3] == doctest::Approx(0.34));
  CHECK(r.values[4] == doctest::Approx(0.372));
}

TEST_CASE("soft intervention replaces the noise term only") {
  const auto m = chain(3, 1.0, 0.0);
  const auto noise = noise_of({0.5, -0.2, 0.1});
  const auto r = do_intervene(m, {{}, {{1, 0.0}}}, noise);
  CHECK(r.values[1] == doctest::Approx(0.5));
  CHECK(r.values[2] == doctest::Approx(0.6));
}

TEST_CASE("interventions on unknown nodes are rejected") {
  const auto m = chain(3, 1.0, 0.0);
  CHECK_THROWS(do_intervene(m, {{{7, 0.0}}, {}}, noise_of({0, 0, 0})));
  CHECK_THROWS(do_intervene(m, {{}, {{7, 0.0}}}, noise_of({0, 0, 0})));
}

TEST_CASE("counterfactual of a root fault on a linear chain") {
  // Observed: root degraded to 0.1 with nominal 0.9; chain weights 1 propagate it.
  const auto m = chain(3, 1.0, 0.0);
  const std::vector<double> obs = {0.1, 0.1, 0.1};
  const auto r = counterfactual(m, obs, 0.1, {{{0, 0.9}}, {}});
  CHECK(r.values[2] == doctest::Approx(0.9));
  CHECK(r.outcome == doctest::Approx(0.9));
}

TEST_CASE("counterfactual without a path to the outcome leaves it unchanged") {
  // 0 -> 1 and 2 -> 3; only node 1 enters the read-out.
  DiGraph g(plain_nodes(4), {{0, 1}, {2, 3}});
  std::vector<Mechanism> mechs(4);
  for (std::size_t j = 0; j < 4; ++j) {
    mechs[j].node = j;
    mechs[j].parents = g.parents(j);
    mechs[j].parent_weights.assign(mechs[j].parents.size(), 1.0);
    mechs[j].amplification_alpha = 0.0;
  }
  OutcomeReadout readout{{1}, {1.0}, 0.0};
  const StructuralModel m(g, mechs, readout);
  const std::vector<double> obs = {0.4, 0.5, 0.2, 0.3};
  CHECK(counterfactual_outcome(m, obs, 0.5, {{{2, 1.0}}, {}}) == doctest::Approx(0.5));
}

TEST_CASE("empty intervention returns the observed outcome") {
  std::mt19937_64 rng(3);
  const auto m = masattr::testing::random_scm(8, rng, 0.5);
  const auto r = simulate(m, 42);
  const CounterfactualWorld world(m, r.values, r.outcome);
  CHECK(world.outcome({}) == r.outcome);
}

TEST_CASE("counterfactual consistency on random models") {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    const auto m = masattr::testing::random_scm(n, rng, rep % 2 ? 0.5 : 0.0);
    const auto obs = simulate(m, static_cast<std::uint64_t>(rep));
    // Setting one node to its observed value reproduces the whole observation.
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const auto cf = counterfactual(m, obs.values, obs.outcome, {{{j, obs.values[j]}}, {}});
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(cf.values[k] - obs.values[k]) <= 1e-12);
    CHECK(std::abs(cf.outcome - obs.outcome) <= 1e-12);
  }
}

TEST_CASE("interventions never change non-descendants") {
  std::mt19937_64 rng(202);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    const auto m = masattr::testing::random_scm(n, rng, 0.5);
    const auto noise = sample_noise(m, static_cast<std::uint64_t>(rep));
    const auto base = simulate(m, noise);
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const auto r = do_intervene(m, {{{j, 0.77}}, {}}, noise);
    const auto desc = m.graph().descendants(j);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j || desc[k]) continue;
      CHECK(r.values[k] == base.values[k]);
    }
  }
}

TEST_CASE("alpha zero agrees with a plain additive reference") {
  std::mt19937_64 rng(303);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 25)(rng);
    const auto m = masattr::testing::random_scm(n, rng, 0.0);
    const auto noise = sample_noise(m, static_cast<std::uint64_t>(rep));
    const auto r = simulate(m, noise);
    const auto ref = masattr::testing::reference_values(m, noise.nodes);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(r.values[k] - ref[k]) <= 1e-12);
  }
}

TEST_CASE("fit recovers known parent weights") {
  // x2 = 0.8 x0 + 0.3 x1 + noise, 500 samples.
  DiGraph g(plain_nodes(3), {{0, 2}, {1, 2}});
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n0(0.5, 0.2);
  std::normal_distribution<double> e(0.0, 0.05);
  Eigen::MatrixXd values(500, 3);
  for (int r = 0; r < 500; ++r) {
    values(r, 0) = n0(rng);
    values(r, 1) = n0(rng);
    values(r, 2) = 0.8 * values(r, 0) + 0.3 * values(r, 1) + e(rng);
  }
  FitReport report;
  const auto m = fit_mechanisms(values, g, {}, &report);
  CHECK(report.samples == 500);
  CHECK(report.rank_deficient_nodes.empty());
  const auto& mech = m.mechanisms()[2];
  CHECK(std::abs(mech.parent_weights[0] - 0.8) <= 0.1);
  CHECK(std::abs(mech.parent_weights[1] - 0.3) <= 0.1);
  CHECK(mech.noise_scale == doctest::Approx(0.05).epsilon(0.2));
}

TEST_CASE("zero-variance parent is flagged rank deficient") {
  DiGraph g(plain_nodes(2), {{0, 1}});
  Eigen::MatrixXd values(50, 2);
  for (int r = 0; r < 50; ++r) {
    values(r, 0) = 0.7;
    values(r, 1) = 0.1 * (r % 5);
  }
  FitReport report;
  const auto m = fit_mechanisms(values, g, {}, &report);
  CHECK(report.rank_deficient_nodes == std::vector<std::size_t>{1});
  CHECK(m.mechanisms()[1].rank_deficient);
  CHECK(std::isfinite(m.mechanisms()[1].parent_weights[0]));
}

TEST_CASE("noise-free corpus fits zero noise scale") {
  DiGraph g(plain_nodes(2), {{0, 1}});
  Eigen::MatrixXd values(40, 2);
  for (int r = 0; r < 40; ++r) {
    values(r, 0) = 0.01 * r;
    values(r, 1) = 0.2 + 0.5 * values(r, 0);
  }
  const auto m = fit_mechanisms(values, g, {});
  CHECK(m.mechanisms()[1].noise_scale <= 1e-9);
  CHECK(m.mechanisms()[1].parent_weights[0] == doctest::Approx(0.5));
}

TEST_CASE("fit rejects small or mismatched corpora") {
  DiGraph g(plain_nodes(2), {{0, 1}});
  CHECK_THROWS_AS(fit_mechanisms(Eigen::MatrixXd::Zero(10, 2), g, {}), InputError);
  CHECK_THROWS_AS(fit_mechanisms(Eigen::MatrixXd::Zero(40, 3), g, {}), InputError);
}

TEST_CASE("model JSON round trip") {
  std::mt19937_64 rng(4);
  const auto m = masattr::testing::random_scm(12, rng, 0.5);
  const auto back = model_from_json(to_json(m));
  CHECK(to_json(back) == to_json(m));
  const auto noise = sample_noise(m, 9);
  CHECK(simulate(back, noise).values == simulate(m, noise).values);
}
