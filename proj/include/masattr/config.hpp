#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "masattr/cp_identifier.hpp"

namespace masattr {

// Every tunable of the attribution pipeline. The JSON form uses the same field names.
struct Config {
  std::uint64_t seed = 0;
  double theta_success = 0.5;
  double alpha = 0.5;
  double x_optimal = 1.0;
  // Agent counterfactuals: "nominal" zeroes the agent's abducted noise, "value" forces x_optimal.
  std::string agent_repair = "nominal";
  // Step counterfactuals for the intervention delta: "value" is do(X_k = x_optimal), "nominal"
  // zeroes the step's abducted noise.
  std::string step_repair = "value";

  std::size_t permutations = 2000;
  double shapley_stop_stderr = 0.01;

  double alpha_sig = 0.01;
  std::size_t max_cond = 3;
  bool context_conditioning = true;
  std::size_t context_dim = 16;
  double context_epsilon = 0.1;
  std::size_t path_cap = 10000;

  std::size_t bootstrap = 200;
  std::size_t k_top = 3;
  std::size_t block_length = 3;
  FinalScoreWeights weights;

  bool inversion = true;
  double io_link_threshold = 0.4;
  std::size_t upstream_window = 5;
  std::size_t min_history = 30;
  // Rows drawn by the residual bootstrap when no history corpus is supplied.
  std::size_t fallback_samples = 200;

  std::string embedder = "mock";
  std::size_t jobs = 1;
  bool record_timings = false;
};

// Unknown keys and ill-typed values raise InputError naming the key.
Config config_from_json(const nlohmann::json& doc, Config base = {});
nlohmann::json to_json(const Config& config);
void validate(const Config& config);

// Parses "w1,w2,w3".
FinalScoreWeights parse_weights(const std::string& text);

}  // namespace masattr
