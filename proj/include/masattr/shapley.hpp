#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "masattr/scm.hpp"

namespace masattr {

using Coalition = std::uint64_t;

// Cooperative game over named players; coalitions are bitmasks over player positions.
class CoalitionGame {
 public:
  using ValueFn = std::function<double(Coalition)>;

  CoalitionGame(std::vector<std::string> players, ValueFn value_fn);

  const std::vector<std::string>& players() const { return players_; }
  std::size_t size() const { return players_.size(); }
  Coalition grand() const;

  // Memoized, safe under concurrent callers.
  double value(Coalition s) const;
  std::size_t evaluations() const;

 private:
  std::vector<std::string> players_;
  ValueFn value_fn_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<Coalition, double> cache_;
};

struct ShapleyEstimate {
  std::vector<double> values;
  std::vector<double> std_errors;
  std::size_t permutations = 0;
  std::uint64_t seed = 0;
  bool exact = false;
};

inline constexpr std::size_t kExactShapleyLimit = 12;
inline constexpr std::size_t kMinPermutations = 100;

ShapleyEstimate exact_shapley(const CoalitionGame& game);

struct McShapleyOptions {
  std::size_t permutations = 2000;
  std::uint64_t seed = 0;
  // Stop once every stderr falls below this; 0 disables early stopping.
  double stop_stderr = 0.01;
  std::size_t min_permutations = 200;
};

ShapleyEstimate mc_shapley(const CoalitionGame& game, const McShapleyOptions& options);

// v(S) = counterfactual outcome with every node of every agent in S repaired, noise abducted from
// the observation. `agent_of_node[j]` indexes into `agents`.
CoalitionGame characteristic_from_scm(const StructuralModel& model, std::vector<double> observed,
                                      double observed_outcome, std::vector<std::string> agents,
                                      std::vector<std::size_t> agent_of_node, NodeRepair repair = {});

// Repairs every node of the agents in `s`.
InterventionSpec agent_intervention(std::span<const std::size_t> agent_of_node, Coalition s, NodeRepair repair);

}  // namespace masattr
