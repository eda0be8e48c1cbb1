#include "masattr/commands.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "masattr/errors.hpp"
#include "masattr/synth.hpp"

namespace masattr {

namespace fs = std::filesystem;
using nlohmann::json;

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

namespace {

std::string trace_id_of(const std::string& path) {
  auto name = fs::path(path).filename().string();
  for (const std::string ext : {".jsonl", ".json"}) {
    if (name.size() > ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0) {
      return name.substr(0, name.size() - ext.size());
    }
  }
  return name;
}

bool looks_like_whowhen(const std::string& text) {
  try {
    const auto doc = json::parse(text);
    return doc.is_object() && doc.contains("history");
  } catch (const json::exception&) {
    return false;
  }
}

std::unique_ptr<SimilarityProvider> provider_for(const Config& cfg, std::string* warning) {
  if (cfg.embedder == "http") {
    try {
      return HttpSimilarity::from_environment();
    } catch (const ProviderError& e) {
      if (warning) *warning = e.what();
      return nullptr;
    }
  }
  return std::make_unique<LexicalSimilarity>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

}  // namespace

PipelineInput load_input(const std::string& trace_path, const AttributeOptions& options) {
  PipelineInput in;
  in.trace_id = trace_id_of(trace_path);
  const std::string text = read_file(trace_path);
  const bool whowhen = options.format == "whowhen" || (options.format == "auto" && looks_like_whowhen(text));
  if (options.format != "auto" && options.format != "native" && options.format != "whowhen") {
    throw InputError("unknown trace format: " + options.format);
  }
  in.trace = whowhen ? parse_whowhen(text) : parse_native_trace(text);

  std::optional<std::string> history = options.history;
  if (!history) {
    const auto sibling = fs::path(trace_path).parent_path() / (in.trace_id + ".history.jsonl");
    if (fs::exists(sibling)) history = sibling.string();
  }
  if (history) in.history = parse_native_stream(read_file(*history));
  if (options.model) {
    try {
      in.model = model_from_json(json::parse(read_file(*options.model)));
    } catch (const json::exception& e) {
      throw InputError("malformed model file " + *options.model + ": " + e.what());
    }
  }
  return in;
}

int exit_code(const AttributionReport& report) {
  if (report.failed_stage) return report.input_error ? kExitInput : kExitStage;
  return report.low_confidence() ? kExitLowConfidence : kExitOk;
}

Config instance_config(const Config& config, const std::string& trace_id) {
  Config c = config;
  c.seed = config.seed ^ fnv1a(trace_id);
  return c;
}

AttributionReport attribute_one(const std::string& trace_path, const AttributeOptions& options, const Config& config) {
  PipelineInput input;
  try {
    input = load_input(trace_path, options);
  } catch (const std::exception& e) {
    AttributionReport r;
    r.trace_id = trace_id_of(trace_path);
    r.config = instance_config(config, r.trace_id);
    r.failed_stage = "ingest";
    r.error = e.what();
    r.input_error = dynamic_cast<const InputError*>(&e) != nullptr || dynamic_cast<const json::exception*>(&e) != nullptr;
    return r;
  }
  const Config cfg = instance_config(config, input.trace_id);
  std::string warning;
  const auto provider = provider_for(cfg, &warning);
  auto report = run_attribution(input, cfg, provider.get());
  if (!warning.empty()) report.warnings.insert(report.warnings.begin(), "embedder unavailable: " + warning);
  return report;
}

int cmd_attribute(const AttributeOptions& options, const Config& config, std::ostream& out, std::ostream& err) {
  if (options.traces.empty()) {
    err << "attribute: no trace paths given\n";
    return kExitInput;
  }
  if (options.history && options.traces.size() > 1) {
    err << "attribute: --history applies to a single trace\n";
    return kExitInput;
  }
  try {
    fs::create_directories(options.out_dir);
  } catch (const fs::filesystem_error& e) {
    err << "attribute: cannot create output directory: " << e.what() << "\n";
    return kExitInput;
  }
  std::vector<AttributionReport> reports(options.traces.size());
  parallel_for(options.traces.size(), config.jobs,
               [&](std::size_t i) { reports[i] = attribute_one(options.traces[i], options, config); });
  int worst = kExitOk;
  for (const auto& r : reports) {
    const auto base = fs::path(options.out_dir) / r.trace_id;
    try {
      write_text(base.string() + ".report.json", to_json(r, config.record_timings).dump(2) + "\n");
      write_text(base.string() + ".report.md", to_markdown(r));
    } catch (const InputError& e) {
      err << e.what() << "\n";
      worst = std::max<int>(worst, kExitInput);
      continue;
    }
    const int code = exit_code(r);
    worst = std::max(worst, code);
    if (r.failed_stage) {
      err << r.trace_id << ": stage " << *r.failed_stage << " failed: " << r.error << "\n";
    } else {
      out << r.trace_id << ": agent " << r.agent->agent << ", step " << *r.predicted_step
          << (r.low_confidence() ? " (low confidence)" : "") << "\n";
    }
  }
  return worst;
}

int cmd_evaluate(const EvaluateOptions& options, const Config& config, std::ostream& out, std::ostream& err) {
  if (options.method != "causal" && options.method != "random") {
    err << "evaluate: method must be causal or random\n";
    return kExitInput;
  }
  std::vector<CorpusEntry> entries;
  std::vector<GroundTruth> truths;
  try {
    for (auto& e : list_corpus(options.corpus_dir)) {
      if (!e.truth) continue;
      truths.push_back(read_ground_truth(*e.truth));
      entries.push_back(std::move(e));
    }
  } catch (const InputError& e) {
    err << "evaluate: " << e.what() << "\n";
    return kExitInput;
  }
  if (entries.empty()) {
    err << "evaluate: no instances\n";
    return kExitInput;
  }
  std::vector<std::optional<Prediction>> preds(entries.size());
  std::vector<std::string> notes(entries.size());
  parallel_for(entries.size(), config.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    if (options.method == "random") {
      try {
        const auto trace = parse_native_trace(read_file(e.trace.string()));
        preds[i] = random_baseline(trace, config.seed ^ fnv1a(e.name));
      } catch (const std::exception& ex) {
        notes[i] = e.name + ": " + ex.what();
      }
      return;
    }
    const auto r = attribute_one(e.trace.string(), AttributeOptions{}, config);
    if (r.agent && r.predicted_step) {
      preds[i] = Prediction{r.agent->agent, *r.predicted_step};
    } else {
      notes[i] = e.name + ": stage " + r.failed_stage.value_or("?") + " failed: " + r.error;
    }
  });
  auto metrics = evaluate(preds, truths);
  for (const auto& n : notes) {
    if (!n.empty()) metrics.log.push_back(n);
  }
  auto doc = to_json(metrics);
  doc["method"] = options.method;
  const auto path = options.out ? fs::path(*options.out) : fs::path(options.corpus_dir) / ("eval_" + options.method + ".json");
  try {
    write_text(path, doc.dump(2) + "\n");
  } catch (const InputError& e) {
    err << "evaluate: " << e.what() << "\n";
    return kExitInput;
  }
  out << "method      " << options.method << "\n"
      << "instances   " << metrics.n_instances << "\n"
      << "agent acc   " << metrics.agent_accuracy << "\n"
      << "step acc    " << metrics.step_accuracy << "\n";
  for (const auto& l : metrics.log) err << l << "\n";
  return kExitOk;
}

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err) {
  try {
    json doc;
    try {
      doc = json::parse(read_file(options.spec_path));
    } catch (const json::exception& e) {
      throw InputError("malformed synth spec: " + std::string(e.what()));
    }
    auto spec = synth_spec_from_json(doc);
    if (options.seed) spec.seed = *options.seed;
    if (options.count == 0) throw InputError("count must be positive");
    const auto corpus = generate_corpus(spec, options.count);
    write_corpus(corpus, options.out_dir);
    std::size_t failed = 0;
    for (const auto& c : corpus) failed += c.failed;
    out << "wrote " << corpus.size() << " instances to " << options.out_dir << " (" << failed << " below the success threshold)\n";
    return kExitOk;
  } catch (const InputError& e) {
    err << "synth: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "synth: " << e.what() << "\n";
    return kExitStage;
  }
}

int cmd_export_graph(const ExportGraphOptions& options, const Config& config, std::ostream& out, std::ostream& err) {
  if (options.format != "dot" && options.format != "json") {
    err << "export-graph: format must be dot or json\n";
    return kExitInput;
  }
  std::string text;
  try {
    const auto input = load_input(options.trace, options.input);
    if (options.kind == "cdc") {
      const Config cfg = instance_config(config, input.trace_id);
      std::string warning;
      const auto provider = provider_for(cfg, &warning);
      const auto r = run_attribution(input, cfg, provider.get());
      if (!r.oriented) {
        err << "export-graph: stage " << r.failed_stage.value_or("?") << " failed: " << r.error << "\n";
        return exit_code(r);
      }
      if (options.format == "dot") {
        DiGraph g = r.oriented->graph;
        text = to_dot(g, input.trace_id + "-cdc");
      } else {
        text = json{{"skeleton", to_json(*r.skeleton)}, {"oriented", to_json(*r.oriented)}, {"ace", to_json(*r.ace)}}.dump(2) + "\n";
      }
    } else {
      validate(input.trace);
      const auto trace = infer_io_links(input.trace, config.io_link_threshold);
      const auto data = build_data_graph(trace);
      const auto causal = break_cycles((config.inversion ? invert(data) : without_inversion(data)).graph);
      auto edges_json = [](const DiGraph& g) {
        json e = json::array();
        for (const auto& x : g.edges()) e.push_back({x.from, x.to});
        return e;
      };
      if (options.kind == "data") {
        text = options.format == "dot" ? to_dot(data.graph, input.trace_id + "-data")
                                       : json{{"edges", edges_json(data.graph)}}.dump(2) + "\n";
      } else if (options.kind == "causal") {
        json removed = json::array();
        for (const auto& e : causal.removed_edges) removed.push_back({e.from, e.to});
        text = options.format == "dot" ? to_dot(causal.graph, input.trace_id + "-causal")
                                       : json{{"edges", edges_json(causal.graph)}, {"removed", removed}}.dump(2) + "\n";
      } else if (options.kind == "agent") {
        const auto ag = project_to_agent_graph(causal);
        if (options.format == "dot") {
          text = to_dot(ag, input.trace_id + "-agents");
        } else {
          json e = json::array();
          for (std::size_t k = 0; k < ag.edges.size(); ++k) {
            e.push_back({{"from", ag.agents[ag.edges[k].from]}, {"to", ag.agents[ag.edges[k].to]}, {"first_contact", ag.contact_time[k]}});
          }
          json removed = json::array();
          for (const auto& x : ag.removed_edges) removed.push_back({{"from", ag.agents[x.from]}, {"to", ag.agents[x.to]}});
          text = json{{"agents", ag.agents}, {"edges", e}, {"removed", removed}}.dump(2) + "\n";
        }
      } else {
        throw InputError("unknown graph kind: " + options.kind);
      }
    }
    if (options.out) {
      write_text(*options.out, text);
    } else {
      out << text;
    }
    return kExitOk;
  } catch (const InputError& e) {
    err << "export-graph: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "export-graph: " << e.what() << "\n";
    return kExitStage;
  }
}

}  // namespace masattr
