#pragma once

// Execution trajectories of a multi-agent system and their on-disk formats.
//
// Native format: line-delimited JSON. One header object
//   {"task", "complexity", "agent_config", "outcome", "labels"?, "goal"?}
// followed by one object per step
//   {"idx", "agent", "action": {"kind", "payload", "tool"?}, "t", "ctx", "in", "out", "perf"?}.
// Input references are strings "step:<idx>/<artifact-id>". Several traces may be
// concatenated in one stream; every header object starts a new trace.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace masattr {

struct Action {
  std::string kind;
  std::string payload;
  std::optional<std::string> tool;

  bool operator==(const Action&) const = default;
};

struct Step {
  std::size_t index = 0;
  std::string agent;
  Action action;
  double timestamp = 0.0;
  nlohmann::json context = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<double> performance;
  // Producers added by infer_io_links; never serialized.
  std::set<std::size_t> inferred_inputs;

  bool operator==(const Step&) const = default;
};

struct Labels {
  std::string mistake_agent;
  std::size_t mistake_step = 0;

  bool operator==(const Labels&) const = default;
};

struct ExecutionTrace {
  std::string task;
  std::string goal;
  double task_complexity = 1.0;
  std::map<std::string, double> agent_config;
  double outcome = 0.0;
  std::optional<Labels> labels;
  std::vector<Step> steps;
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const ExecutionTrace&) const = default;

  // Distinct agents in order of first appearance.
  std::vector<std::string> agents() const;
  std::size_t first_appearance(std::string_view agent) const;
};

// A parsed "step:<idx>/<artifact>" reference.
struct ArtifactRef {
  std::size_t step = 0;
  std::string artifact;
};
std::optional<ArtifactRef> parse_artifact_ref(std::string_view ref);

// Throws InvariantError naming the first violated invariant.
void validate(const ExecutionTrace& trace);

// Producers feeding step j: resolvable explicit references plus inferred links, sorted, unique.
std::vector<std::size_t> resolved_producers(const ExecutionTrace& trace, std::size_t j);

ExecutionTrace parse_native_trace(std::string_view text);
std::vector<ExecutionTrace> parse_native_stream(std::string_view text);
std::string serialize_native(const ExecutionTrace& trace);

ExecutionTrace parse_whowhen(std::string_view text);

// Adds a link i -> j (i < j) when step j carries no explicit input references and the token
// Jaccard overlap of the two payloads reaches the threshold.
ExecutionTrace infer_io_links(ExecutionTrace trace, double overlap_threshold);

std::string read_file(const std::string& path);

}  // namespace masattr
