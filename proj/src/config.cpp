#include "masattr/config.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

#include "masattr/errors.hpp"

namespace masattr {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config: '") + key + "' has the wrong type");
  }
}

}  // namespace

Config config_from_json(const json& doc, Config c) {
  if (!doc.is_object()) throw InputError("config: expected a JSON object");
  static const char* const known[] = {
      "seed",        "theta_success",     "alpha",        "x_optimal",        "agent_repair",        "step_repair",  "permutations",
      "shapley_stop_stderr", "alpha_sig", "max_cond",     "context_conditioning", "context_dim",
      "context_epsilon", "path_cap",      "bootstrap",    "k_top",            "block_length",
      "weights",     "inversion",         "io_link_threshold", "upstream_window", "min_history",
      "fallback_samples", "embedder",     "jobs",         "record_timings"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw InputError("config: unknown key '" + key + "'");
    }
  }
  take(doc, "seed", c.seed);
  take(doc, "theta_success", c.theta_success);
  take(doc, "alpha", c.alpha);
  take(doc, "x_optimal", c.x_optimal);
  take(doc, "agent_repair", c.agent_repair);
  take(doc, "step_repair", c.step_repair);
  take(doc, "permutations", c.permutations);
  take(doc, "shapley_stop_stderr", c.shapley_stop_stderr);
  take(doc, "alpha_sig", c.alpha_sig);
  take(doc, "max_cond", c.max_cond);
  take(doc, "context_conditioning", c.context_conditioning);
  take(doc, "context_dim", c.context_dim);
  take(doc, "context_epsilon", c.context_epsilon);
  take(doc, "path_cap", c.path_cap);
  take(doc, "bootstrap", c.bootstrap);
  take(doc, "k_top", c.k_top);
  take(doc, "block_length", c.block_length);
  if (doc.contains("weights")) {
    const auto& w = doc.at("weights");
    if (w.is_array() && w.size() == 3 && w[0].is_number() && w[1].is_number() && w[2].is_number()) {
      c.weights = {w[0].get<double>(), w[1].get<double>(), w[2].get<double>()};
    } else if (w.is_object()) {
      take(w, "ace", c.weights.ace);
      take(w, "delta", c.weights.delta);
      take(w, "confidence", c.weights.confidence);
    } else {
      throw InputError("config: 'weights' must be [w1, w2, w3] or {ace, delta, confidence}");
    }
  }
  take(doc, "inversion", c.inversion);
  take(doc, "io_link_threshold", c.io_link_threshold);
  take(doc, "upstream_window", c.upstream_window);
  take(doc, "min_history", c.min_history);
  take(doc, "fallback_samples", c.fallback_samples);
  take(doc, "embedder", c.embedder);
  take(doc, "jobs", c.jobs);
  take(doc, "record_timings", c.record_timings);
  validate(c);
  return c;
}

json to_json(const Config& c) {
  return {{"seed", c.seed},
          {"theta_success", c.theta_success},
          {"alpha", c.alpha},
          {"x_optimal", c.x_optimal},
          {"agent_repair", c.agent_repair},
          {"step_repair", c.step_repair},
          {"permutations", c.permutations},
          {"shapley_stop_stderr", c.shapley_stop_stderr},
          {"alpha_sig", c.alpha_sig},
          {"max_cond", c.max_cond},
          {"context_conditioning", c.context_conditioning},
          {"context_dim", c.context_dim},
          {"context_epsilon", c.context_epsilon},
          {"path_cap", c.path_cap},
          {"bootstrap", c.bootstrap},
          {"k_top", c.k_top},
          {"block_length", c.block_length},
          {"weights", {c.weights.ace, c.weights.delta, c.weights.confidence}},
          {"inversion", c.inversion},
          {"io_link_threshold", c.io_link_threshold},
          {"upstream_window", c.upstream_window},
          {"min_history", c.min_history},
          {"fallback_samples", c.fallback_samples},
          {"embedder", c.embedder},
          {"jobs", c.jobs},
          {"record_timings", c.record_timings}};
}

void validate(const Config& c) {
  auto bad = [](const std::string& what) { throw InputError("config: " + what); };
  if (!(c.theta_success > 0.0 && c.theta_success <= 1.0)) bad("theta_success must be in (0, 1]");
  if (c.alpha < 0.0) bad("alpha must be >= 0");
  if (c.permutations < 100) bad("permutations must be >= 100");
  if (!(c.alpha_sig > 0.0 && c.alpha_sig < 1.0)) bad("alpha_sig must be in (0, 1)");
  if (c.context_dim == 0) bad("context_dim must be positive");
  if (!(c.context_epsilon > 0.0 && c.context_epsilon <= 1.0)) bad("context_epsilon must be in (0, 1]");
  if (c.path_cap == 0) bad("path_cap must be positive");
  if (c.bootstrap < kMinReplicates) bad("bootstrap must be >= " + std::to_string(kMinReplicates));
  if (c.k_top == 0) bad("k_top must be positive");
  if (c.block_length == 0) bad("block_length must be positive");
  if (c.weights.ace < 0 || c.weights.delta < 0 || c.weights.confidence < 0) bad("weights must be nonnegative");
  if (c.weights.ace + c.weights.delta + c.weights.confidence <= 0) bad("weights must not all be zero");
  if (c.embedder != "mock" && c.embedder != "http") bad("embedder must be \"mock\" or \"http\"");
  if (c.agent_repair != "nominal" && c.agent_repair != "value") bad("agent_repair must be \"nominal\" or \"value\"");
  if (c.step_repair != "nominal" && c.step_repair != "value") bad("step_repair must be \"nominal\" or \"value\"");
  if (c.jobs == 0) bad("jobs must be positive");
  if (c.fallback_samples < 30) bad("fallback_samples must be >= 30");
}

FinalScoreWeights parse_weights(const std::string& text) {
  std::istringstream is(text);
  std::string part;
  std::vector<double> w;
  while (std::getline(is, part, ',')) {
    try {
      std::size_t used = 0;
      w.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw InputError("--weights: '" + part + "' is not a number");
    }
  }
  if (w.size() != 3) throw InputError("--weights expects three comma-separated numbers");
  return {w[0], w[1], w[2]};
}

}  // namespace masattr
