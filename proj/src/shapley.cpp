#include "masattr/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace masattr {

CoalitionGame::CoalitionGame(std::vector<std::string> players, ValueFn value_fn)
    : players_(std::move(players)), value_fn_(std::move(value_fn)) {
  if (players_.size() > 63) throw std::invalid_argument("coalition games support at most 63 players");
  if (!value_fn_) throw std::invalid_argument("coalition game needs a value function");
}

Coalition CoalitionGame::grand() const { return (Coalition{1} << players_.size()) - 1; }

double CoalitionGame::value(Coalition s) const {
  {
    std::lock_guard lock(mutex_);
    const auto it = cache_.find(s);
    if (it != cache_.end()) return it->second;
  }
  const double v = value_fn_(s);
  std::lock_guard lock(mutex_);
  return cache_.emplace(s, v).first->second;
}

std::size_t CoalitionGame::evaluations() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

ShapleyEstimate exact_shapley(const CoalitionGame& game) {
  const std::size_t n = game.size();
  if (n > kExactShapleyLimit) {
    throw std::invalid_argument("exact Shapley supports at most " + std::to_string(kExactShapleyLimit) +
                                " players, got " + std::to_string(n));
  }
  // weight[s] = s! (n-s-1)! / n!
  std::vector<double> weight(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    weight[s] = std::exp(std::lgamma(static_cast<double>(s) + 1) + std::lgamma(static_cast<double>(n - s)) -
                         std::lgamma(static_cast<double>(n) + 1));
  }
  ShapleyEstimate est;
  est.values.assign(n, 0.0);
  est.std_errors.assign(n, 0.0);
  est.exact = true;
  const Coalition full = game.grand();
  for (Coalition s = 0; s <= full; ++s) {
    const double vs = game.value(s);
    const auto size = static_cast<std::size_t>(std::popcount(s));
    for (std::size_t i = 0; i < n; ++i) {
      const Coalition bit = Coalition{1} << i;
      if (s & bit) continue;
      est.values[i] += weight[size] * (game.value(s | bit) - vs);
    }
  }
  return est;
}

ShapleyEstimate mc_shapley(const CoalitionGame& game, const McShapleyOptions& options) {
  if (options.permutations < kMinPermutations) {
    throw std::invalid_argument("mc_shapley needs at least " + std::to_string(kMinPermutations) + " permutations");
  }
  const std::size_t n = game.size();
  std::vector<double> sum(n, 0.0);
  std::vector<double> sum_sq(n, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  const double v_empty = game.value(0);

  ShapleyEstimate est;
  est.seed = options.seed;
  auto finish = [&](std::size_t m) {
    est.permutations = m;
    est.values.assign(n, 0.0);
    est.std_errors.assign(n, 0.0);
    const double dm = static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) {
      est.values[i] = sum[i] / dm;
      if (m > 1) {
        const double var = std::max(0.0, (sum_sq[i] - dm * est.values[i] * est.values[i]) / (dm - 1));
        est.std_errors[i] = std::sqrt(var / dm);
      }
    }
  };

  for (std::size_t m = 1; m <= options.permutations; ++m) {
    std::shuffle(order.begin(), order.end(), rng);
    Coalition s = 0;
    double prev = v_empty;
    for (auto i : order) {
      s |= Coalition{1} << i;
      const double cur = game.value(s);
      const double delta = cur - prev;
      sum[i] += delta;
      sum_sq[i] += delta * delta;
      prev = cur;
    }
    if (options.stop_stderr > 0 && m >= options.min_permutations && m % 100 == 0 && m < options.permutations) {
      finish(m);
      if (std::all_of(est.std_errors.begin(), est.std_errors.end(), [&](double e) { return e < options.stop_stderr; })) {
        return est;
      }
    }
  }
  finish(options.permutations);
  return est;
}

InterventionSpec agent_intervention(std::span<const std::size_t> agent_of_node, Coalition s, NodeRepair repair) {
  InterventionSpec spec;
  for (std::size_t j = 0; j < agent_of_node.size(); ++j) {
    if (!(s & (Coalition{1} << agent_of_node[j]))) continue;
    repair.apply(spec, j);
  }
  return spec;
}

CoalitionGame characteristic_from_scm(const StructuralModel& model, std::vector<double> observed,
                                      double observed_outcome, std::vector<std::string> agents,
                                      std::vector<std::size_t> agent_of_node, NodeRepair repair) {
  if (agent_of_node.size() != model.size()) throw std::invalid_argument("agent map must cover every node");
  for (auto a : agent_of_node) {
    if (a >= agents.size()) throw std::invalid_argument("agent map refers to an unknown agent");
  }
  auto owned = std::make_shared<const StructuralModel>(model);
  auto world = std::make_shared<const CounterfactualWorld>(*owned, std::move(observed), observed_outcome);
  auto fn = [owned, world, map = std::move(agent_of_node), repair](Coalition s) {
    return world->outcome(agent_intervention(map, s, repair));
  };
  return CoalitionGame(std::move(agents), std::move(fn));
}

}  // namespace masattr
