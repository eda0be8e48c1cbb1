#include "masattr/sbs_locator.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "masattr/errors.hpp"

namespace masattr {

namespace {

// True when a should rank before b on the given key.
bool better(double ka, double kb, const AgentScore& a, const AgentScore& b) {
  if (ka != kb) return ka > kb;
  if (a.shapley != b.shapley) return a.shapley > b.shapley;
  return a.first_step < b.first_step;
}

}  // namespace

BottleneckReport bottleneck_scores(const StructuralModel& model, const ShapleyEstimate& shapley,
                                   const std::vector<double>& observed, double observed_outcome,
                                   const std::vector<std::string>& agents,
                                   const std::vector<std::size_t>& agent_of_node,
                                   const std::vector<std::size_t>& first_step, double threshold, NodeRepair repair) {
  if (observed_outcome >= threshold) {
    std::ostringstream os;
    os << "trace did not fail: outcome " << observed_outcome << " >= success threshold " << threshold;
    throw InputError(os.str());
  }
  if (shapley.values.size() != agents.size() || first_step.size() != agents.size()) {
    throw std::invalid_argument("per-agent inputs must cover every agent");
  }
  const CounterfactualWorld world(model, observed, observed_outcome);
  BottleneckReport report;
  report.success_threshold = threshold;
  for (std::size_t a = 0; a < agents.size(); ++a) {
    AgentScore rec;
    rec.agent = agents[a];
    rec.shapley = shapley.values[a];
    rec.y_original = observed_outcome;
    rec.y_cf = world.outcome(agent_intervention(agent_of_node, Coalition{1} << a, repair));
    rec.indicator = rec.y_cf >= threshold ? 1 : 0;
    rec.score = rec.shapley * (rec.y_cf - rec.y_original) * rec.indicator;
    rec.first_step = first_step[a];
    report.records.push_back(std::move(rec));
  }
  report.ranking.resize(agents.size());
  std::iota(report.ranking.begin(), report.ranking.end(), 0);
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = report.records[x];
    const auto& b = report.records[y];
    return better(a.score, b.score, a, b);
  });
  return report;
}

AgentAttribution attribute_agent(const BottleneckReport& report) {
  if (report.records.empty()) throw std::invalid_argument("bottleneck report has no agents");
  const auto& recs = report.records;
  const bool all_zero = std::all_of(recs.begin(), recs.end(), [](const AgentScore& r) { return r.score == 0.0; });
  auto key = [&](const AgentScore& r) { return all_zero ? r.shapley * r.improvement() : r.score; };
  std::size_t best = 0;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (better(key(recs[i]), key(recs[best]), recs[i], recs[best])) best = i;
  }
  return {best, recs[best].agent, all_zero};
}

nlohmann::json to_json(const BottleneckReport& report) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& r : report.records) {
    agents.push_back({{"agent", r.agent},
                      {"shapley", r.shapley},
                      {"y_original", r.y_original},
                      {"y_cf", r.y_cf},
                      {"indicator", r.indicator},
                      {"score", r.score},
                      {"first_step", r.first_step}});
  }
  nlohmann::json ranking = nlohmann::json::array();
  for (auto i : report.ranking) ranking.push_back(report.records[i].agent);
  return {{"success_threshold", report.success_threshold}, {"agents", agents}, {"ranking", ranking}};
}

}  // namespace masattr
