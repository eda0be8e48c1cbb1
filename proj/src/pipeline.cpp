#include "masattr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "masattr/errors.hpp"
#include "masattr/text.hpp"

namespace masattr {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> observed_performance(const ExecutionTrace& trace, const FeatureSet& features, bool* proxied) {
  const bool all = std::all_of(trace.steps.begin(), trace.steps.end(), [](const Step& s) { return s.performance.has_value(); });
  if (proxied) *proxied = !all;
  std::vector<double> out(trace.steps.size());
  for (std::size_t j = 0; j < trace.steps.size(); ++j) {
    if (all) {
      out[j] = *trace.steps[j].performance;
      continue;
    }
    // Error tokens pull the proxy down; goal overlap pulls it up.
    const auto& raw = features.raw[j];
    const double goal = std::clamp(raw.semantic[0], 0.0, 1.0);
    out[j] = std::clamp((0.5 + 0.5 * goal) / (1.0 + raw.tech[3]), 0.0, 1.0);
  }
  return out;
}

namespace {

struct DiscoveryData {
  // Column c holds step col_step[c]; the outcome is the last column.
  std::vector<std::size_t> col_step;
  Eigen::MatrixXd samples;
  Eigen::MatrixXd context;
  std::vector<double> times;
  std::vector<std::vector<double>> features;
  std::vector<double> cmas;
};

struct DiscoveryResult {
  CausalSkeleton skeleton;
  OrientedGraph oriented;
  AceScores ace;
};

// Maps discovery output from column indices back to step indices; the outcome keeps index n.
DiscoveryResult to_step_space(DiscoveryResult r, const std::vector<std::size_t>& col_step) {
  const std::size_t n = col_step.size();
  auto m = [&](std::size_t c) { return c == n ? n : col_step[c]; };
  auto me = [&](const Edge& e) { return Edge{m(e.from), m(e.to)}; };
  auto mp = [&](std::size_t a, std::size_t b) { return std::make_pair(std::min(m(a), m(b)), std::max(m(a), m(b))); };

  CausalSkeleton sk;
  sk.variables = r.skeleton.variables;
  sk.context_rank = r.skeleton.context_rank;
  for (const auto& [a, b] : r.skeleton.adjacencies) sk.adjacencies.push_back(mp(a, b));
  std::sort(sk.adjacencies.begin(), sk.adjacencies.end());
  for (const auto& [pair, sep] : r.skeleton.sepsets) {
    std::vector<std::size_t> s;
    for (auto v : sep) s.push_back(m(v));
    std::sort(s.begin(), s.end());
    sk.sepsets[mp(pair.first, pair.second)] = s;
  }
  for (auto rec : r.skeleton.ci_log) {
    const auto pr = mp(rec.i, rec.j);
    rec.i = pr.first;
    rec.j = pr.second;
    for (auto& v : rec.cond) v = m(v);
    sk.ci_log.push_back(std::move(rec));
  }

  std::vector<NodeInfo> nodes(n + 1);
  for (std::size_t c = 0; c <= n; ++c) {
    nodes[m(c)] = r.oriented.graph.nodes()[c];
    nodes[m(c)].step = m(c);
  }
  OrientedGraph og{DiGraph(nodes), {}, r.oriented.conflicts};
  for (const auto& e : r.oriented.graph.edges()) og.graph.add_edge(m(e.from), m(e.to));
  for (const auto& [e, why] : r.oriented.reasons) og.reasons[me(e)] = why;

  AceScores ace;
  ace.outcome = n;
  ace.ace.resize(n + 1);
  ace.path_count.resize(n + 1);
  ace.truncated.resize(n + 1);
  for (std::size_t c = 0; c <= n; ++c) {
    ace.ace[m(c)] = r.ace.ace[c];
    ace.path_count[m(c)] = r.ace.path_count[c];
    ace.truncated[m(c)] = r.ace.truncated[c];
  }
  for (const auto& [e, v] : r.ace.local_effect) ace.local_effect[me(e)] = v;
  for (const auto& [e, v] : r.ace.context_weight) ace.context_weight[me(e)] = v;
  return {std::move(sk), std::move(og), std::move(ace)};
}

DiscoveryResult discover(const DiscoveryData& d, const std::vector<std::size_t>* rows, const Config& cfg) {
  Eigen::MatrixXd samples;
  Eigen::MatrixXd context;
  if (rows) {
    samples.resize(static_cast<Eigen::Index>(rows->size()), d.samples.cols());
    context.resize(static_cast<Eigen::Index>(rows->size()), d.context.cols());
    for (std::size_t r = 0; r < rows->size(); ++r) {
      samples.row(static_cast<Eigen::Index>(r)) = d.samples.row(static_cast<Eigen::Index>((*rows)[r]));
      if (d.context.cols() > 0) context.row(static_cast<Eigen::Index>(r)) = d.context.row(static_cast<Eigen::Index>((*rows)[r]));
    }
  }
  const auto& s = rows ? samples : d.samples;
  const auto& c = rows ? context : d.context;
  SkeletonOptions so;
  so.alpha_sig = cfg.alpha_sig;
  so.max_cond = cfg.max_cond;
  so.use_context = cfg.context_conditioning;
  DiscoveryResult out;
  out.skeleton = discover_skeleton(s, c, so);
  out.oriented = orient_edges(out.skeleton, d.times, d.cmas, d.features);
  AceOptions ao;
  ao.epsilon = cfg.context_conditioning ? cfg.context_epsilon : 1.0;
  ao.path_cap = cfg.path_cap;
  out.ace = compute_ace(out.oriented, s, static_cast<std::size_t>(s.cols()) - 1, d.features, d.cmas, ao);
  return to_step_space(std::move(out), d.col_step);
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

class StageRunner {
 public:
  StageRunner(AttributionReport& report) : report_(report) {}

  template <typename Fn>
  bool run(const char* name, Fn&& fn) {
    if (report_.failed_stage) return false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const InputError& e) {
      fail(name, e.what(), true);
    } catch (const std::exception& e) {
      fail(name, e.what(), false);
    }
    const auto t1 = std::chrono::steady_clock::now();
    report_.timings.push_back({name, std::chrono::duration<double, std::milli>(t1 - t0).count()});
    if (report_.failed_stage) return false;
    report_.completed_stages.push_back(name);
    return true;
  }

 private:
  void fail(const char* name, const std::string& what, bool input) {
    report_.failed_stage = name;
    report_.error = what;
    report_.input_error = input;
  }
  AttributionReport& report_;
};

}  // namespace

AttributionReport run_attribution(const PipelineInput& input, const Config& cfg, const SimilarityProvider* provider) {
  AttributionReport report;
  report.trace_id = input.trace_id;
  report.config = cfg;
  StageRunner stages(report);

  ExecutionTrace trace;
  DataDependencyGraph data;
  PerformanceCausalGraph causal;
  FeatureSet features;
  ContextVector cmas;
  std::vector<double> observed;
  double y_obs = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> agent_of;
  std::vector<std::size_t> first_step;
  StructuralModel base_model;
  StructuralModel model;
  DiscoveryData dd;
  const DeterministicContextEncoder encoder(cfg.context_dim, derive_seed(0, 0x636d6173));
  const FeatureOptions fopts{cfg.upstream_window};
  const NodeRepair repair{cfg.agent_repair == "nominal", cfg.x_optimal};
  const NodeRepair step_repair{cfg.step_repair == "nominal", cfg.x_optimal};

  const bool ok =
      stages.run("ingest", [&] {
        validate(input.trace);
        trace = infer_io_links(input.trace, cfg.io_link_threshold);
        n = trace.steps.size();
        report.steps = n;
        report.agents = trace.agents();
        agent_of.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
          agent_of[j] = static_cast<std::size_t>(
              std::find(report.agents.begin(), report.agents.end(), trace.steps[j].agent) - report.agents.begin());
        }
        for (const auto& a : report.agents) first_step.push_back(trace.first_appearance(a));
        y_obs = trace.outcome;
        for (std::size_t h = 0; h < input.history.size(); ++h) {
          if (input.history[h].steps.size() != n) {
            throw InputError("history trace " + std::to_string(h) + " has " + std::to_string(input.history[h].steps.size()) +
                             " steps, expected " + std::to_string(n));
          }
        }
        if (report.agents.size() > 63) throw InputError("too many agents: " + std::to_string(report.agents.size()));
      }) &&
      stages.run("graph", [&] {
        data = build_data_graph(trace);
        const auto oriented = cfg.inversion ? invert(data) : without_inversion(data);
        causal = break_cycles(oriented.graph);
        report.removed_cycle_edges = causal.removed_edges;
      }) &&
      stages.run("features", [&] {
        features = extract_features(trace, data, provider, fopts);
        if (features.degraded) report.warnings.push_back("semantic features degraded: " + features.degraded_reason);
        cmas = encoder.encode(trace, features);
        bool proxied = false;
        observed = observed_performance(trace, features, &proxied);
        if (proxied) report.warnings.push_back("step performance missing; proxied from text features");
      }) &&
      stages.run("scm", [&] {
        const bool use_history = input.history.size() >= cfg.min_history;
        if (!input.history.empty() && !use_history) {
          report.warnings.push_back("history of " + std::to_string(input.history.size()) + " runs is below min_history " +
                                    std::to_string(cfg.min_history) + "; ignored");
        }
        if (input.model) {
          if (input.model->size() != n) {
            throw InputError("model has " + std::to_string(input.model->size()) + " nodes, trace has " + std::to_string(n));
          }
          base_model = *input.model;
          report.model_source = "loaded";
        } else if (use_history) {
          FitOptions fo;
          fo.alpha = cfg.alpha;
          fo.min_samples = cfg.min_history;
          FitReport fr;
          base_model = fit_mechanisms(input.history, causal.graph, fo, &fr);
          for (auto v : fr.rank_deficient_nodes) {
            report.warnings.push_back("rank-deficient fit at step " + std::to_string(v) + "; ridge fallback used");
          }
          report.model_source = "fitted";
        } else {
          base_model = prior_model(causal.graph, cfg.alpha, cfg.x_optimal);
          report.model_source = "prior";
        }
        base_model.set_alpha(cfg.alpha);
        base_model.set_shapley_values(std::vector<double>(n, 0.0));
      }) &&
      stages.run("shapley", [&] {
        auto game = characteristic_from_scm(base_model, observed, y_obs, report.agents, agent_of, repair);
        McShapleyOptions mo;
        mo.permutations = cfg.permutations;
        mo.seed = derive_seed(cfg.seed, 1);
        mo.stop_stderr = cfg.shapley_stop_stderr;
        report.shapley = mc_shapley(game, mo);
        std::vector<double> per_node(n);
        for (std::size_t j = 0; j < n; ++j) per_node[j] = report.shapley->values[agent_of[j]];
        model = base_model;
        model.set_shapley_values(per_node);
      }) &&
      stages.run("bottleneck", [&] {
        report.bottleneck = bottleneck_scores(model, *report.shapley, observed, y_obs, report.agents, agent_of, first_step,
                                              cfg.theta_success, repair);
        report.agent = attribute_agent(*report.bottleneck);
        if (report.agent->low_confidence) {
          report.warnings.push_back("no agent repair reaches the success threshold; low-confidence fallback used");
        }
      }) &&
      stages.run("causal-discovery", [&] {
        // Variables follow the precedence of the performance causal graph: reverse execution order
        // under inversion, execution order otherwise.
        const double dir = cfg.inversion ? -1.0 : 1.0;
        dd.col_step.resize(n);
        std::iota(dd.col_step.begin(), dd.col_step.end(), std::size_t{0});
        std::sort(dd.col_step.begin(), dd.col_step.end(), [&](std::size_t a, std::size_t b) {
          const double ta = dir * trace.steps[a].timestamp;
          const double tb = dir * trace.steps[b].timestamp;
          return ta != tb ? ta < tb : (cfg.inversion ? a > b : a < b);
        });
        const bool use_history = input.history.size() >= cfg.min_history;
        const auto rows = use_history ? input.history.size() : cfg.fallback_samples;
        dd.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n + 1));
        dd.context.resize(static_cast<Eigen::Index>(rows), cfg.context_conditioning ? static_cast<Eigen::Index>(cfg.context_dim) : 0);
        auto col = [&](std::size_t c) { return static_cast<Eigen::Index>(c); };
        if (use_history) {
          report.sample_source = "history";
          for (std::size_t r = 0; r < rows; ++r) {
            const auto& h = input.history[r];
            for (std::size_t c = 0; c < n; ++c) {
              const auto j = dd.col_step[c];
              if (!h.steps[j].performance) {
                throw InputError("history trace " + std::to_string(r) + " lacks performance at step " + std::to_string(j));
              }
              dd.samples(static_cast<Eigen::Index>(r), col(c)) = *h.steps[j].performance;
            }
            dd.samples(static_cast<Eigen::Index>(r), col(n)) = h.outcome;
            if (cfg.context_conditioning) {
              const auto hl = infer_io_links(h, cfg.io_link_threshold);
              const auto hf = extract_features(hl, build_data_graph(hl), provider, fopts);
              const auto hc = encoder.encode(hl, hf);
              for (std::size_t k = 0; k < hc.values.size(); ++k) {
                dd.context(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = hc.values[k];
              }
            }
          }
        } else {
          // Moving-block resampling of the abducted noise along step order, replayed through the model.
          report.sample_source = "residual-bootstrap";
          const auto noise = abduct(model, observed, y_obs);
          std::mt19937_64 rng(derive_seed(cfg.seed, 3));
          for (std::size_t r = 0; r < rows; ++r) {
            NoiseVector nv = noise;
            const auto idx = moving_block_indices(n, cfg.block_length, rng);
            for (std::size_t j = 0; j < n; ++j) nv.nodes[j] = noise.nodes[idx[j]];
            const auto real = simulate(model, nv);
            for (std::size_t c = 0; c < n; ++c) {
              dd.samples(static_cast<Eigen::Index>(r), col(c)) = real.values[dd.col_step[c]];
            }
            dd.samples(static_cast<Eigen::Index>(r), col(n)) = real.outcome;
            for (Eigen::Index k = 0; k < dd.context.cols(); ++k) {
              dd.context(static_cast<Eigen::Index>(r), k) = cmas.values[static_cast<std::size_t>(k)];
            }
          }
        }
        report.sample_rows = rows;
        double last = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          dd.times.push_back(dir * trace.steps[dd.col_step[c]].timestamp);
          last = c == 0 ? dd.times.back() : std::max(last, dd.times.back());
        }
        dd.times.push_back(last + 1.0);
        for (std::size_t c = 0; c < n; ++c) {
          const auto v = features.standardized[dd.col_step[c]].flat();
          dd.features.emplace_back(v.begin(), v.end());
        }
        dd.features.emplace_back(kFeatureDim, 0.0);
        dd.cmas = cmas.values;
        auto res = discover(dd, nullptr, cfg);
        if (res.skeleton.skipped_tests() > 0) {
          report.warnings.push_back(std::to_string(res.skeleton.skipped_tests()) + " singular CI tests skipped");
        }
        for (const auto& c : res.oriented.conflicts) report.warnings.push_back("orientation conflict: " + c);
        if (res.ace.any_truncated()) report.warnings.push_back("path enumeration truncated at path_cap");
        report.skeleton = std::move(res.skeleton);
        report.oriented = std::move(res.oriented);
        report.ace = std::move(res.ace);
      }) &&
      stages.run("counterfactual", [&] {
        const CounterfactualWorld world(model, observed, y_obs);
        for (std::size_t k = 0; k < n; ++k) report.deltas.push_back(step_intervention_delta(world, k, step_repair));
      }) &&
      stages.run("bootstrap", [&] {
        BootstrapOptions bo;
        bo.replicates = cfg.bootstrap;
        bo.k_top = cfg.k_top;
        bo.block = cfg.block_length;
        bo.seed = derive_seed(cfg.seed, 2);
        const ReplayFn replay = [&](const std::vector<std::size_t>& rows) { return rank_by_ace(discover(dd, &rows, cfg).ace); };
        report.bootstrap = bootstrap_confidence(replay, static_cast<std::size_t>(dd.samples.rows()), n, bo);
        if (report.bootstrap->failures > 0) {
          report.warnings.push_back(std::to_string(report.bootstrap->failures) + " bootstrap replicates failed");
        }
      }) &&
      stages.run("rank", [&] {
        std::vector<double> ace(report.ace->ace.begin(), report.ace->ace.begin() + static_cast<std::ptrdiff_t>(n));
        report.ranking = final_rank(ace, report.deltas, report.bootstrap->confidence, cfg.weights);
        // The decisive step is searched within the attributed agent's own steps.
        std::optional<std::size_t> best;
        for (std::size_t j = 0; j < n; ++j) {
          if (agent_of[j] != report.agent->record) continue;
          if (!best || report.ranking->records[j].final_score > report.ranking->records[*best].final_score) best = j;
        }
        report.predicted_step = best;
      }) &&
      stages.run("report", [&] {
        const auto& sc = *report.ace;
        auto value_at = [&](std::size_t v) { return v == n ? 1.0 : sc.ace[v]; };
        std::size_t u = *report.predicted_step;
        while (u != n) {
          const auto kids = report.oriented->graph.children(u);
          if (kids.empty()) break;
          std::size_t best = kids.front();
          double best_val = -1.0;
          for (auto c : kids) {
            const Edge e{u, c};
            const double contrib = std::abs(sc.local_effect.at(e) / sc.context_weight.at(e) * value_at(c));
            if (contrib > best_val) {
              best_val = contrib;
              best = c;
            }
          }
          report.chain.push_back({u, best, sc.local_effect.at({u, best})});
          u = best;
        }
        const auto& rec = report.bottleneck->records[report.agent->record];
        const auto& st = report.ranking->records[*report.predicted_step];
        std::string chain = std::to_string(*report.predicted_step);
        for (const auto& link : report.chain) chain += "→" + (link.to == n ? std::string("outcome") : std::to_string(link.to));
        if (report.chain.empty() || report.chain.back().to != n) chain += " (no path to outcome)";
        report.narrative = "Agent " + rec.agent + " is the primary bottleneck (BS=" + fmt(rec.score) + ", φ̂=" +
                           fmt(rec.shapley) + "). The decisive step is " + std::to_string(*report.predicted_step) +
                           " (ACE=" + fmt(st.ace) + ", Δ=" + fmt(st.delta) + ", confidence=" + fmt(st.confidence) +
                           "). Causal chain: " + chain + ".";
      });
  (void)ok;
  return report;
}

json to_json(const AttributionReport& r, bool include_timings) {
  json doc;
  doc["schema"] = "masattr.report/1";
  doc["trace_id"] = r.trace_id;
  doc["status"] = r.complete() ? "complete" : "partial";
  doc["completed_stages"] = r.completed_stages;
  if (r.failed_stage) {
    doc["failed_stage"] = *r.failed_stage;
    doc["error"] = r.error;
  }
  json prediction = json::object();
  if (r.agent) {
    prediction["agent"] = r.agent->agent;
    prediction["low_confidence"] = r.agent->low_confidence;
  }
  if (r.predicted_step) prediction["step"] = *r.predicted_step;
  doc["prediction"] = prediction;
  doc["narrative"] = r.narrative;
  json chain = json::array();
  for (const auto& c : r.chain) {
    chain.push_back({{"from", c.from}, {"to", c.to == r.steps ? json("outcome") : json(c.to)}, {"local_effect", c.local_effect}});
  }
  doc["causal_chain"] = chain;
  doc["steps_total"] = r.steps;
  doc["agents"] = r.agents;
  if (r.shapley) {
    doc["shapley"] = {{"values", r.shapley->values},
                      {"std_errors", r.shapley->std_errors},
                      {"permutations", r.shapley->permutations},
                      {"seed", r.shapley->seed}};
  }
  if (r.bottleneck) doc["bottleneck"] = to_json(*r.bottleneck);
  if (r.ranking) doc["step_ranking"] = to_json(*r.ranking);
  if (r.skeleton) {
    json adj = json::array();
    for (const auto& [a, b] : r.skeleton->adjacencies) adj.push_back({a, b});
    doc["causal_discovery"] = {{"sample_source", r.sample_source},
                               {"sample_rows", r.sample_rows},
                               {"context_rank", r.skeleton->context_rank},
                               {"ci_tests", r.skeleton->ci_log.size()},
                               {"skipped_tests", r.skeleton->skipped_tests()},
                               {"adjacencies", adj},
                               {"oriented", to_json(*r.oriented)},
                               {"ace", to_json(*r.ace)}};
  }
  if (r.bootstrap) doc["bootstrap"] = {{"replicates", r.bootstrap->replicates}, {"failures", r.bootstrap->failures}};
  json removed = json::array();
  for (const auto& e : r.removed_cycle_edges) removed.push_back({e.from, e.to});
  doc["removed_cycle_edges"] = removed;
  doc["model_source"] = r.model_source;
  doc["warnings"] = r.warnings;
  auto cfg = to_json(r.config);
  // Execution-only knobs do not change results.
  cfg.erase("jobs");
  cfg.erase("record_timings");
  doc["config"] = cfg;
  if (include_timings) {
    json t = json::object();
    for (const auto& s : r.timings) t[s.stage] = s.millis;
    doc["timings_ms"] = t;
  }
  return doc;
}

std::string to_markdown(const AttributionReport& r) {
  std::ostringstream os;
  os << "# Failure attribution: " << r.trace_id << "\n\n";
  if (!r.complete()) os << "**Partial report.** Stage `" << *r.failed_stage << "` failed: " << r.error << "\n\n";
  if (!r.narrative.empty()) os << r.narrative << "\n\n";
  if (r.agent) {
    os << "Predicted agent: **" << r.agent->agent << "**";
    if (r.agent->low_confidence) os << " (low confidence)";
    os << "\n";
  }
  if (r.predicted_step) os << "Predicted step: **" << *r.predicted_step << "**\n";
  os << "\n";
  if (r.bottleneck) {
    os << "## Agents\n\n| agent | shapley | Y | Y_cf | I | BS |\n|---|---|---|---|---|---|\n";
    for (auto i : r.bottleneck->ranking) {
      const auto& a = r.bottleneck->records[i];
      os << "| " << a.agent << " | " << fmt(a.shapley) << " | " << fmt(a.y_original) << " | " << fmt(a.y_cf) << " | "
         << a.indicator << " | " << fmt(a.score) << " |\n";
    }
    os << "\n";
  }
  if (r.ranking) {
    os << "## Steps\n\n| step | ACE | delta | confidence | final |\n|---|---|---|---|---|\n";
    for (auto i : r.ranking->order) {
      const auto& s = r.ranking->records[i];
      os << "| " << s.step << " | " << fmt(s.ace) << " | " << fmt(s.delta) << " | " << fmt(s.confidence) << " | "
         << fmt(s.final_score) << " |\n";
    }
    os << "\n";
  }
  if (!r.warnings.empty()) {
    os << "## Warnings\n\n";
    for (const auto& w : r.warnings) os << "- " << w << "\n";
    os << "\n";
  }
  os << "## Stage timings\n\n";
  for (const auto& t : r.timings) os << "- " << t.stage << ": " << fmt(t.millis) << " ms\n";
  return os.str();
}

}  // namespace masattr
