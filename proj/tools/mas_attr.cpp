// mas-attr: failure attribution for multi-agent execution traces.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "masattr/commands.hpp"
#include "masattr/errors.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta;
  std::optional<double> alpha_sig;
  std::optional<std::size_t> permutations;
  std::optional<std::size_t> bootstrap;
  std::optional<std::string> weights;
  std::optional<std::string> embedder;
  std::optional<std::size_t> jobs;
  std::optional<double> alpha;
  std::optional<std::string> agent_repair;
  std::optional<std::string> step_repair;
  bool no_inversion = false;
  bool no_context = false;
  bool record_timings = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--theta-success", theta, "Success threshold on the outcome");
    app->add_option("--alpha-sig", alpha_sig, "CI test significance level");
    app->add_option("--permutations", permutations, "Shapley permutation budget");
    app->add_option("--bootstrap", bootstrap, "Bootstrap replicates");
    app->add_option("--weights", weights, "Final-score weights w1,w2,w3");
    app->add_option("--embedder", embedder, "Similarity provider")->check(CLI::IsMember({"mock", "http"}));
    app->add_option("--jobs", jobs, "Worker threads");
    app->add_option("--alpha", alpha, "Shapley amplification strength");
    app->add_option("--agent-repair", agent_repair, "Agent counterfactual: nominal or value")
        ->check(CLI::IsMember({"nominal", "value"}));
    app->add_option("--step-repair", step_repair, "Step counterfactual: nominal or value")
        ->check(CLI::IsMember({"nominal", "value"}));
    app->add_flag("--no-inversion", no_inversion, "Keep data-flow edge direction");
    app->add_flag("--no-context", no_context, "Disable context conditioning");
    app->add_flag("--record-timings", record_timings, "Include stage timings in JSON reports");
  }

  masattr::Config resolve() const {
    masattr::Config c;
    if (!config_path.empty()) {
      try {
        c = masattr::config_from_json(nlohmann::json::parse(masattr::read_file(config_path)));
      } catch (const nlohmann::json::exception& e) {
        throw masattr::InputError("malformed config " + config_path + ": " + e.what());
      }
    }
    if (seed) c.seed = *seed;
    if (theta) c.theta_success = *theta;
    if (alpha_sig) c.alpha_sig = *alpha_sig;
    if (permutations) c.permutations = *permutations;
    if (bootstrap) c.bootstrap = *bootstrap;
    if (weights) c.weights = masattr::parse_weights(*weights);
    if (embedder) c.embedder = *embedder;
    if (jobs) c.jobs = *jobs;
    if (alpha) c.alpha = *alpha;
    if (agent_repair) c.agent_repair = *agent_repair;
    if (step_repair) c.step_repair = *step_repair;
    if (no_inversion) c.inversion = false;
    if (no_context) c.context_conditioning = false;
    if (record_timings) c.record_timings = true;
    masattr::validate(c);
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure attribution for multi-agent execution traces"};
  app.require_subcommand(1);

  masattr::AttributeOptions attr;
  CommonFlags attr_flags;
  auto* attribute = app.add_subcommand("attribute", "Attribute a failed trace to an agent and a step");
  attribute->add_option("traces", attr.traces, "Trace files")->required();
  attribute->add_option("--history", attr.history, "Clean-run corpus (native JSONL) for a single trace");
  attribute->add_option("--model", attr.model, "Saved structural model (JSON)");
  attribute->add_option("--format", attr.format, "Trace format")->check(CLI::IsMember({"auto", "native", "whowhen"}));
  attribute->add_option("--out", attr.out_dir, "Report directory");
  attr_flags.attach(attribute);

  masattr::EvaluateOptions eval;
  CommonFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "Score attribution accuracy on a labelled corpus");
  evaluate->add_option("corpus", eval.corpus_dir, "Corpus directory")->required();
  evaluate->add_option("--method", eval.method, "causal or random")->check(CLI::IsMember({"causal", "random"}));
  evaluate->add_option("--out", eval.out, "Metrics file");
  eval_flags.attach(evaluate);

  masattr::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  synth_cmd->add_option("spec", synth.spec_path, "Synth spec (JSON)")->required();
  synth_cmd->add_option("--count", synth.count, "Number of instances");
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Override the spec seed");

  masattr::ExportGraphOptions graph;
  CommonFlags graph_flags;
  auto* export_graph = app.add_subcommand("export-graph", "Export a trace graph as DOT or JSON");
  export_graph->add_option("trace", graph.trace, "Trace file")->required();
  export_graph->add_option("--kind", graph.kind, "data, causal, agent or cdc")
      ->check(CLI::IsMember({"data", "causal", "agent", "cdc"}));
  export_graph->add_option("--graph-format", graph.format, "dot or json")->check(CLI::IsMember({"dot", "json"}));
  export_graph->add_option("--out", graph.out, "Output file (default stdout)");
  export_graph->add_option("--history", graph.input.history, "Clean-run corpus for --kind cdc");
  export_graph->add_option("--format", graph.input.format, "Trace format")
      ->check(CLI::IsMember({"auto", "native", "whowhen"}));
  graph_flags.attach(export_graph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : masattr::kExitInput;
  }

  try {
    if (*attribute) return masattr::cmd_attribute(attr, attr_flags.resolve(), std::cout, std::cerr);
    if (*evaluate) return masattr::cmd_evaluate(eval, eval_flags.resolve(), std::cout, std::cerr);
    if (*synth_cmd) return masattr::cmd_synth(synth, std::cout, std::cerr);
    if (*export_graph) return masattr::cmd_export_graph(graph, graph_flags.resolve(), std::cout, std::cerr);
  } catch (const masattr::InputError& e) {
    std::cerr << e.what() << "\n";
    return masattr::kExitInput;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return masattr::kExitStage;
  }
  return masattr::kExitInput;
}
