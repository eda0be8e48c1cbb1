#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "masattr/config.hpp"
#include "masattr/pipeline.hpp"

namespace masattr {

enum ExitCode : int { kExitOk = 0, kExitLowConfidence = 1, kExitInput = 2, kExitStage = 3 };

struct AttributeOptions {
  std::vector<std::string> traces;
  // Clean-run corpus for a single trace; otherwise <stem>.history.jsonl beside each trace is used if present.
  std::optional<std::string> history;
  std::optional<std::string> model;
  std::string out_dir = ".";
  // "auto", "native" or "whowhen".
  std::string format = "auto";
};

// Loads one trace (and its history) into a pipeline input. Throws InputError.
PipelineInput load_input(const std::string& trace_path, const AttributeOptions& options);

// Report exit code for one run.
int exit_code(const AttributionReport& report);

// The per-trace seed: config seed mixed with the trace id.
Config instance_config(const Config& config, const std::string& trace_id);

AttributionReport attribute_one(const std::string& trace_path, const AttributeOptions& options, const Config& config);

// Writes <out>/<trace-id>.report.json and .report.md per trace; returns the worst exit code.
int cmd_attribute(const AttributeOptions& options, const Config& config, std::ostream& out, std::ostream& err);

struct EvaluateOptions {
  std::string corpus_dir;
  std::string method = "causal";
  std::optional<std::string> out;
};

int cmd_evaluate(const EvaluateOptions& options, const Config& config, std::ostream& out, std::ostream& err);

struct SynthOptions {
  std::string spec_path;
  std::size_t count = 200;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);

struct ExportGraphOptions {
  std::string trace;
  // "data", "causal", "agent" or "cdc".
  std::string kind = "causal";
  // "dot" or "json".
  std::string format = "dot";
  std::optional<std::string> out;
  AttributeOptions input;
};

int cmd_export_graph(const ExportGraphOptions& options, const Config& config, std::ostream& out, std::ostream& err);

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace masattr
