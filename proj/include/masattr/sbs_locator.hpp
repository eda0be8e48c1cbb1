#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masattr/scm.hpp"
#include "masattr/shapley.hpp"

namespace masattr {

struct AgentScore {
  std::string agent;
  double shapley = 0.0;
  double y_original = 0.0;
  double y_cf = 0.0;
  int indicator = 0;
  double score = 0.0;
  std::size_t first_step = 0;

  double improvement() const { return y_cf - y_original; }
};

struct BottleneckReport {
  std::vector<AgentScore> records;
  // Record positions sorted by score descending, ties as in attribute_agent.
  std::vector<std::size_t> ranking;
  double success_threshold = 0.5;
};

struct AgentAttribution {
  std::size_t record = 0;
  std::string agent;
  bool low_confidence = false;
};

// One record per agent: Y_cf with all of the agent's nodes repaired, BS = phi * (Y_cf - Y) * I[Y_cf >= theta].
// `agent_of_node` indexes into `agents`; `first_step` gives each agent's first appearance.
BottleneckReport bottleneck_scores(const StructuralModel& model, const ShapleyEstimate& shapley,
                                   const std::vector<double>& observed, double observed_outcome,
                                   const std::vector<std::string>& agents,
                                   const std::vector<std::size_t>& agent_of_node,
                                   const std::vector<std::size_t>& first_step, double threshold,
                                   NodeRepair repair = {});

// argmax BS, ties by larger phi then earlier first appearance. When every score is 0 the
// winner is chosen on phi * (Y_cf - Y) and flagged low-confidence.
AgentAttribution attribute_agent(const BottleneckReport& report);

nlohmann::json to_json(const BottleneckReport& report);

}  // namespace masattr
