#pragma once

// Synthetic multi-agent traces with a known performance SCM and one injected fault.
//
// Steps consume artifacts of earlier steps; performance propagates along the inverted edges, from a
// consumer to the producers it depends on, and the outcome is the mean over the performance sinks
// (steps with no inputs). Each instance carries a failed run plus a history of clean runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masattr/graph.hpp"
#include "masattr/scm.hpp"
#include "masattr/trace.hpp"

namespace masattr {

struct SynthSpec {
  // Per-instance counts are drawn uniformly from [agents, agents_max] and [steps, steps_max];
  // a max of 0 means "same as the minimum".
  std::size_t agents = 4;
  std::size_t agents_max = 0;
  std::size_t steps = 12;
  std::size_t steps_max = 0;
  double dag_density = 0.3;

  // Parent weights of a non-root step sum to a value in this range.
  double weight_sum_min = 0.85;
  double weight_sum_max = 0.98;
  // Nominal step performance; the intercept is (1 - weight sum) * level.
  double level_min = 0.9;
  double level_max = 0.95;
  double noise_min = 0.005;
  double noise_max = 0.02;

  // Task complexity tau ~ U[0.6, 1.4] shifts every step and the outcome by -effect * (tau - 1).
  double complexity_effect = 0.01;
  // Unobserved common shock applied to a random subset of steps in confounded instances.
  double latent_jitter = 0.03;
  double latent_fraction = 0.3;
  double confounded_fraction = 0.0;

  // Negative target picks a random step per instance.
  long target_step = -1;
  double severity_min = 0.6;
  double severity_max = 0.9;
  std::string mode = "degrade";

  double theta_success = 0.5;
  std::size_t history = 100;
  std::uint64_t seed = 0;

  // Throws InputError naming the offending field.
  void validate() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SynthSpec& spec);

struct SynthInstance {
  std::string name;
  ExecutionTrace trace;
  std::vector<ExecutionTrace> history;
  StructuralModel truth;
  bool confounded = false;
  bool failed = false;
  double severity = 0.0;
};

SynthInstance generate_instance(const SynthSpec& spec, std::size_t index);
std::vector<SynthInstance> generate_corpus(const SynthSpec& spec, std::size_t count);

// Writes <name>.jsonl, <name>.history.jsonl, <name>.truth.json and <name>.scm.json per instance.
void write_corpus(const std::vector<SynthInstance>& corpus, const std::filesystem::path& dir);

struct CorpusEntry {
  std::string name;
  std::filesystem::path trace;
  std::optional<std::filesystem::path> history;
  std::optional<std::filesystem::path> truth;
};

// Every *.jsonl that is not a history file, sorted by name.
std::vector<CorpusEntry> list_corpus(const std::filesystem::path& dir);

struct GroundTruth {
  std::string instance;
  std::string mistake_agent;
  std::size_t mistake_step = 0;
  bool confounded = false;
};

GroundTruth read_ground_truth(const std::filesystem::path& path);

struct Prediction {
  std::string agent;
  std::size_t step = 0;
};

struct InstanceOutcome {
  std::string instance;
  std::optional<Prediction> prediction;
  GroundTruth truth;
  bool agent_correct = false;
  bool step_correct = false;
};

struct EvalMetrics {
  double agent_accuracy = 0.0;
  double step_accuracy = 0.0;
  std::size_t n_instances = 0;
  std::vector<InstanceOutcome> outcomes;
  std::vector<std::string> log;
};

// predictions[i] pairs with truths[i]; a missing prediction counts as wrong and is logged.
EvalMetrics evaluate(const std::vector<std::optional<Prediction>>& predictions, const std::vector<GroundTruth>& truths);

nlohmann::json to_json(const EvalMetrics& metrics);

Prediction random_baseline(const ExecutionTrace& trace, std::uint64_t seed);

}  // namespace masattr
