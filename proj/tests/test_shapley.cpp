#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "masattr/scm.hpp"
#include "masattr/shapley.hpp"
#include "support.hpp"

using namespace masattr;
using masattr::testing::PairGame;
using masattr::testing::plain_nodes;

namespace {

CoalitionGame two_player() {
  return CoalitionGame({"1", "2"}, [](Coalition s) {
    switch (s) {
      case 0: return 0.0;
      case 1: return 0.3;
      case 2: return 0.5;
      default: return 1.0;
    }
  });
}

// Three agents A, B, C on a chain 0(A) -> 1(B) -> 2(C) -> 3(A); B is degraded by its noise.
struct FaultWorld {
  StructuralModel model;
  std::vector<double> observed;
  double outcome = 0.0;
  std::vector<std::size_t> agent_of_node = {0, 1, 2, 0};
};

FaultWorld single_fault_at_b(double alpha) {
  DiGraph g(plain_nodes(4), {{0, 1}, {1, 2}, {2, 3}});
  std::vector<Mechanism> mechs(4);
  for (std::size_t j = 0; j < 4; ++j) {
    mechs[j].node = j;
    mechs[j].parents = g.parents(j);
    mechs[j].parent_weights.assign(mechs[j].parents.size(), 0.9);
    mechs[j].intercept = j == 0 ? 0.9 : 0.1;
    mechs[j].amplification_alpha = alpha;
    mechs[j].shapley_value = 0.1 * static_cast<double>(j);
  }
  auto readout = mean_sink_readout(g);
  FaultWorld w{StructuralModel(g, mechs, readout), {}, 0.0};
  NoiseVector noise{{0.0, -0.6, 0.0, 0.0}, 0.0};
  const auto r = simulate(w.model, noise);
  w.observed = r.values;
  w.outcome = r.outcome;
  return w;
}

}  // namespace

TEST_CASE("exact Shapley of the two-player game") {
  const auto est = exact_shapley(two_player());
  CHECK(est.exact);
  CHECK(est.values[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(est.values[1] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("additive game returns its coefficients") {
  const std::vector<double> c = {0.5, -0.2, 1.5, 0.0, 0.3};
  CoalitionGame g({"a", "b", "c", "d", "e"}, [&](Coalition s) {
    double v = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (s >> i & 1) v += c[i];
    }
    return v;
  });
  const auto est = exact_shapley(g);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(est.values[i] == doctest::Approx(c[i]).epsilon(1e-12));
}

TEST_CASE("symmetric players receive equal values") {
  // v depends only on |S|.
  CoalitionGame g({"a", "b", "c", "d"}, [](Coalition s) {
    const int k = __builtin_popcountll(s);
    return static_cast<double>(k * k);
  });
  const auto est = exact_shapley(g);
  for (std::size_t i = 1; i < 4; ++i) CHECK(est.values[i] == doctest::Approx(est.values[0]).epsilon(1e-12));
}

TEST_CASE("exact Shapley matches the closed form of pairwise games") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const PairGame pg(std::uniform_int_distribution<std::size_t>(1, 10)(rng), rng);
    const auto game = pg.game();
    const auto est = exact_shapley(game);
    const auto oracle = pg.shapley();
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(std::abs(est.values[i] - oracle[i]) <= 1e-12);
    // Efficiency.
    const double total = std::accumulate(est.values.begin(), est.values.end(), 0.0);
    CHECK(std::abs(total - (game.value(game.grand()) - game.value(0))) <= 1e-12);
  }
}

TEST_CASE("exact Shapley refuses more than twelve players") {
  CoalitionGame g(std::vector<std::string>(13, "p"), [](Coalition) { return 0.0; });
  CHECK_THROWS(exact_shapley(g));
}

TEST_CASE("Monte Carlo on the two-player game") {
  McShapleyOptions opt;
  opt.permutations = 10000;
  opt.seed = 1;
  opt.stop_stderr = 0.0;
  const auto est = mc_shapley(two_player(), opt);
  CHECK(std::abs(est.values[0] - 0.4) <= 0.02);
  CHECK(est.permutations == 10000);
  CHECK_FALSE(est.exact);
}

TEST_CASE("Monte Carlo within three standard errors of the exact value") {
  std::mt19937_64 rng(12);
  const PairGame pg(8, rng);
  McShapleyOptions opt;
  opt.permutations = 50000;
  opt.seed = 5;
  opt.stop_stderr = 0.0;
  const auto game = pg.game();
  const auto est = mc_shapley(game, opt);
  const auto oracle = pg.shapley();
  for (std::size_t i = 0; i < 8; ++i) {
    CAPTURE(i);
    CHECK(std::abs(est.values[i] - oracle[i]) <= 3.0 * est.std_errors[i]);
  }
  const double total = std::accumulate(est.values.begin(), est.values.end(), 0.0);
  double var = 0.0;
  for (double e : est.std_errors) var += e * e;
  CHECK(std::abs(total - game.value(game.grand())) <= 3.0 * std::sqrt(var) + 1e-9);
}

TEST_CASE("seeded Monte Carlo is bit-reproducible") {
  std::mt19937_64 rng(13);
  const PairGame pg(6, rng);
  McShapleyOptions opt;
  opt.permutations = 500;
  opt.seed = 77;
  const auto a = mc_shapley(pg.game(), opt);
  const auto b = mc_shapley(pg.game(), opt);
  CHECK(a.values == b.values);
  CHECK(a.std_errors == b.std_errors);
  CHECK(a.permutations == b.permutations);
}

TEST_CASE("Monte Carlo early stop respects the minimum") {
  CoalitionGame g({"a", "b", "c"}, [](Coalition s) { return static_cast<double>(__builtin_popcountll(s)); });
  McShapleyOptions opt;
  opt.permutations = 2000;
  opt.seed = 3;
  const auto est = mc_shapley(g, opt);
  CHECK(est.permutations >= opt.min_permutations);
  CHECK(est.permutations < 2000);
  for (double v : est.values) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("Monte Carlo needs at least one hundred permutations") {
  McShapleyOptions opt;
  opt.permutations = 0;
  CHECK_THROWS(mc_shapley(two_player(), opt));
  opt.permutations = 99;
  CHECK_THROWS(mc_shapley(two_player(), opt));
}

TEST_CASE("coalition cache is shared and safe under concurrent callers") {
  std::atomic<int> calls{0};
  CoalitionGame g({"a", "b", "c", "d"}, [&](Coalition s) {
    ++calls;
    return static_cast<double>(s);
  });
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&] {
      for (Coalition s = 0; s < 16; ++s) CHECK(g.value(s) == static_cast<double>(s));
    });
  }
  for (auto& w : workers) w.join();
  CHECK(g.evaluations() == 16);
  exact_shapley(g);
  CHECK(g.evaluations() == 16);
  CHECK(calls.load() == 16);
}

TEST_CASE("characteristic game from a structural model") {
  const auto w = single_fault_at_b(0.5);
  const auto game = characteristic_from_scm(w.model, w.observed, w.outcome, {"A", "B", "C"}, w.agent_of_node);
  SUBCASE("empty coalition is the observed outcome") { CHECK(game.value(0) == doctest::Approx(w.outcome)); }
  SUBCASE("repairing the faulty agent alone equals repairing everyone") {
    CHECK(std::abs(game.value(0b010) - game.value(game.grand())) <= 1e-9);
    CHECK(game.value(0b010) > w.outcome);
  }
  SUBCASE("the faulty agent gets the largest exact value") {
    const auto est = exact_shapley(game);
    CHECK(est.values[1] > est.values[0]);
    CHECK(est.values[1] > est.values[2]);
  }
}

TEST_CASE("agent with no path to the outcome is a dummy") {
  // Agent C owns 2 -> 3; only node 1 enters the read-out.
  DiGraph g(plain_nodes(4), {{0, 1}, {2, 3}});
  std::vector<Mechanism> mechs(4);
  for (std::size_t j = 0; j < 4; ++j) {
    mechs[j].node = j;
    mechs[j].parents = g.parents(j);
    mechs[j].parent_weights.assign(mechs[j].parents.size(), 1.0);
    mechs[j].intercept = 0.2;
    mechs[j].amplification_alpha = 0.0;
  }
  const StructuralModel m(g, mechs, OutcomeReadout{{1}, {1.0}, 0.0});
  const std::vector<double> obs = {0.1, 0.25, 0.05, 0.3};
  for (NodeRepair repair : {NodeRepair{true, 1.0}, NodeRepair{false, 1.0}}) {
    const auto game = characteristic_from_scm(m, obs, 0.25, {"A", "B", "C"}, {0, 1, 2, 2}, repair);
    const auto est = exact_shapley(game);
    CHECK(std::abs(est.values[2]) <= 1e-12);
  }
}

TEST_CASE("agent interventions") {
  const std::vector<std::size_t> agent_of_node = {0, 1, 0, 2};
  const auto nominal = agent_intervention(agent_of_node, 0b001, NodeRepair{});
  CHECK(nominal.assignments.empty());
  CHECK(nominal.noise == std::map<std::size_t, double>{{0, 0.0}, {2, 0.0}});
  const auto value = agent_intervention(agent_of_node, 0b110, NodeRepair{false, 0.8});
  CHECK(value.noise.empty());
  CHECK(value.assignments == std::map<std::size_t, double>{{1, 0.8}, {3, 0.8}});
}

TEST_CASE("characteristic game rejects a bad agent map") {
  const auto w = single_fault_at_b(0.0);
  CHECK_THROWS(characteristic_from_scm(w.model, w.observed, w.outcome, {"A", "B", "C"}, {0, 1}));
  CHECK_THROWS(characteristic_from_scm(w.model, w.observed, w.outcome, {"A", "B", "C"}, {0, 1, 2, 5}));
}
