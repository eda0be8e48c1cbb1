#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masattr/cdc_mas.hpp"
#include "masattr/config.hpp"
#include "masattr/cp_identifier.hpp"
#include "masattr/features.hpp"
#include "masattr/graph.hpp"
#include "masattr/sbs_locator.hpp"
#include "masattr/scm.hpp"
#include "masattr/shapley.hpp"
#include "masattr/similarity.hpp"
#include "masattr/trace.hpp"

namespace masattr {

struct PipelineInput {
  std::string trace_id;
  ExecutionTrace trace;
  // Clean runs of the same system; used to fit the SCM and as causal-discovery samples.
  std::vector<ExecutionTrace> history;
  std::optional<StructuralModel> model;
};

struct ChainLink {
  std::size_t from = 0;
  // Equal to the step count for the outcome node.
  std::size_t to = 0;
  double local_effect = 0.0;
};

struct StageTiming {
  std::string stage;
  double millis = 0.0;
};

struct AttributionReport {
  std::string trace_id;
  Config config;
  std::vector<std::string> completed_stages;
  std::optional<std::string> failed_stage;
  std::string error;
  bool input_error = false;

  std::size_t steps = 0;
  std::vector<std::string> agents;
  std::vector<Edge> removed_cycle_edges;
  std::string model_source;
  std::string sample_source;
  std::size_t sample_rows = 0;

  std::optional<ShapleyEstimate> shapley;
  std::optional<BottleneckReport> bottleneck;
  std::optional<AgentAttribution> agent;
  std::optional<CausalSkeleton> skeleton;
  std::optional<OrientedGraph> oriented;
  std::optional<AceScores> ace;
  std::vector<double> deltas;
  std::optional<BootstrapResult> bootstrap;
  std::optional<StepRanking> ranking;

  std::optional<std::size_t> predicted_step;
  std::vector<ChainLink> chain;
  std::string narrative;
  std::vector<std::string> warnings;
  std::vector<StageTiming> timings;

  bool low_confidence() const { return agent && agent->low_confidence; }
  bool complete() const { return !failed_stage; }
};

// Runs every stage in order; a failing stage stops the run and is recorded with the completed ones.
AttributionReport run_attribution(const PipelineInput& input, const Config& config, const SimilarityProvider* provider);

// Per-step performance values used as the observation; proxied from text features when absent.
std::vector<double> observed_performance(const ExecutionTrace& trace, const FeatureSet& features, bool* proxied);

nlohmann::json to_json(const AttributionReport& report, bool include_timings);
std::string to_markdown(const AttributionReport& report);

std::uint64_t fnv1a(const std::string& text);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace masattr
