#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masattr/scm.hpp"

namespace masattr {

// E[Y | do(X_k = x_optimal)] - Y_observed under abducted noise.
double step_intervention_delta(const CounterfactualWorld& world, std::size_t k, double x_optimal);
// Same contrast with step k repaired as described by `repair`.
double step_intervention_delta(const CounterfactualWorld& world, std::size_t k, const NodeRepair& repair);
double step_intervention_delta(const StructuralModel& model, const std::vector<double>& observed,
                               double observed_outcome, std::size_t k, double x_optimal);

// Row indices of one moving-block resample of n rows.
std::vector<std::size_t> moving_block_indices(std::size_t n, std::size_t block, std::mt19937_64& rng);

// Step ranking produced from a resampled row set; throwing counts as a failed replicate.
using ReplayFn = std::function<std::vector<std::size_t>(const std::vector<std::size_t>& rows)>;

struct BootstrapOptions {
  std::size_t replicates = 200;
  std::size_t k_top = 3;
  std::size_t block = 3;
  std::uint64_t seed = 0;
};

struct BootstrapResult {
  std::vector<double> confidence;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  std::vector<std::string> log;
};

inline constexpr std::size_t kMinReplicates = 50;

// Replicate b draws its rows from a generator seeded by (seed, b).
BootstrapResult bootstrap_confidence(const ReplayFn& replay, std::size_t rows, std::size_t steps,
                                     const BootstrapOptions& options);

struct FinalScoreWeights {
  double ace = 0.5;
  double delta = 0.3;
  double confidence = 0.2;

  // Scaled to sum to one; throws on negative or all-zero weights.
  FinalScoreWeights normalized() const;
};

struct StepScore {
  std::size_t step = 0;
  double ace = 0.0;
  double delta = 0.0;
  double confidence = 0.0;
  double ace_norm = 0.0;
  double delta_norm = 0.0;
  double final_score = 0.0;
};

struct StepRanking {
  std::vector<StepScore> records;
  // Record positions by final score descending, ties by step index.
  std::vector<std::size_t> order;
  std::size_t predicted_step = 0;
  FinalScoreWeights weights;
};

// Min-max over steps ([0,1]; constant vectors give 0.5).
std::vector<double> min_max_normalize(const std::vector<double>& v);

// |ACE| and Delta are min-max normalized, then combined with the normalized weights.
StepRanking final_rank(const std::vector<double>& ace, const std::vector<double>& deltas,
                       const std::vector<double>& confidences, const FinalScoreWeights& weights);

nlohmann::json to_json(const StepRanking& ranking);

}  // namespace masattr
