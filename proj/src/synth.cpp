#include "masattr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "masattr/errors.hpp"

namespace masattr {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw InputError("invalid synth spec: " + field + " " + why); };
  if (agents == 0) fail("agents", "must be at least 1");
  if (agents_max != 0 && agents_max < agents) fail("agents_max", "must be >= agents");
  if (steps < 2) fail("steps", "must be at least 2");
  if (steps_max != 0 && steps_max < steps) fail("steps_max", "must be >= steps");
  if (!(dag_density > 0.0 && dag_density <= 1.0)) fail("dag_density", "must be in (0, 1]");
  if (!(weight_sum_min > 0.0 && weight_sum_min <= weight_sum_max && weight_sum_max < 1.0)) {
    fail("weight_sum", "range must satisfy 0 < min <= max < 1");
  }
  if (!(level_min > 0.0 && level_min <= level_max && level_max <= 1.0)) fail("level", "range must lie in (0, 1]");
  if (!(noise_min >= 0.0 && noise_min <= noise_max)) fail("noise", "range must satisfy 0 <= min <= max");
  if (complexity_effect < 0.0) fail("complexity_effect", "must be >= 0");
  if (latent_jitter < 0.0) fail("latent_jitter", "must be >= 0");
  if (!(latent_fraction >= 0.0 && latent_fraction <= 1.0)) fail("latent_fraction", "must be in [0, 1]");
  if (!(confounded_fraction >= 0.0 && confounded_fraction <= 1.0)) fail("confounded_fraction", "must be in [0, 1]");
  if (target_step >= 0 && static_cast<std::size_t>(target_step) >= steps) fail("fault.target_step", "must be < steps");
  if (!(severity_min > 0.0 && severity_min <= 1.0)) fail("fault.severity", "must be in (0, 1]");
  if (!(severity_max >= severity_min && severity_max <= 1.0)) fail("fault.severity_max", "must be in [severity, 1]");
  if (mode != "degrade" && mode != "withhold") fail("fault.mode", "must be \"degrade\" or \"withhold\"");
  if (!(theta_success > 0.0 && theta_success <= 1.0)) fail("theta_success", "must be in (0, 1]");
}

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("invalid synth spec: ") + key + " has the wrong type");
  }
}

// [min, max] given as a number or a two-element array.
void read_range(const json& obj, const char* key, double& lo, double& hi) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (v.is_number()) {
    lo = hi = v.get<double>();
  } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    lo = v[0].get<double>();
    hi = v[1].get<double>();
  } else {
    throw InputError(std::string("invalid synth spec: ") + key + " must be a number or [min, max]");
  }
}

void read_count_range(const json& obj, const char* key, std::size_t& lo, std::size_t& hi) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (v.is_number_unsigned()) {
    lo = v.get<std::size_t>();
    hi = 0;
  } else if (v.is_array() && v.size() == 2 && v[0].is_number_unsigned() && v[1].is_number_unsigned()) {
    lo = v[0].get<std::size_t>();
    hi = v[1].get<std::size_t>();
  } else {
    throw InputError(std::string("invalid synth spec: ") + key + " must be a count or [min, max]");
  }
}

}  // namespace

SynthSpec synth_spec_from_json(const json& doc) {
  if (!doc.is_object()) throw InputError("invalid synth spec: expected a JSON object");
  SynthSpec s;
  read_count_range(doc, "agents", s.agents, s.agents_max);
  read_count_range(doc, "steps", s.steps, s.steps_max);
  read_field(doc, "dag_density", s.dag_density);
  if (doc.contains("mechanism")) {
    const auto& m = doc.at("mechanism");
    read_range(m, "weight_sum", s.weight_sum_min, s.weight_sum_max);
    read_range(m, "level", s.level_min, s.level_max);
    read_range(m, "noise", s.noise_min, s.noise_max);
  }
  if (doc.contains("confounders")) {
    const auto& c = doc.at("confounders");
    read_field(c, "complexity_effect", s.complexity_effect);
    read_field(c, "latent_jitter", s.latent_jitter);
    read_field(c, "latent_fraction", s.latent_fraction);
    read_field(c, "confounded_fraction", s.confounded_fraction);
  }
  if (doc.contains("fault")) {
    const auto& f = doc.at("fault");
    if (f.contains("target_step") && f.at("target_step").is_null()) {
      s.target_step = -1;
    } else {
      read_field(f, "target_step", s.target_step);
    }
    read_range(f, "severity", s.severity_min, s.severity_max);
    read_field(f, "mode", s.mode);
  }
  read_field(doc, "theta_success", s.theta_success);
  read_field(doc, "history", s.history);
  read_field(doc, "seed", s.seed);
  s.validate();
  return s;
}

json to_json(const SynthSpec& s) {
  return {{"agents", {s.agents, s.agents_max == 0 ? s.agents : s.agents_max}},
          {"steps", {s.steps, s.steps_max == 0 ? s.steps : s.steps_max}},
          {"dag_density", s.dag_density},
          {"mechanism",
           {{"weight_sum", {s.weight_sum_min, s.weight_sum_max}},
            {"level", {s.level_min, s.level_max}},
            {"noise", {s.noise_min, s.noise_max}}}},
          {"confounders",
           {{"complexity_effect", s.complexity_effect},
            {"latent_jitter", s.latent_jitter},
            {"latent_fraction", s.latent_fraction},
            {"confounded_fraction", s.confounded_fraction}}},
          {"fault",
           {{"target_step", s.target_step < 0 ? json(nullptr) : json(s.target_step)},
            {"severity", {s.severity_min, s.severity_max}},
            {"mode", s.mode}}},
          {"theta_success", s.theta_success},
          {"history", s.history},
          {"seed", s.seed}};
}

namespace {

struct Role {
  const char* name;
  const char* tool;
  const char* verb;
};

constexpr Role kRoles[] = {
    {"Orchestrator", nullptr, "updated the plan and delegated the next subtask"},
    {"WebSurfer", "web_search", "searched the web and summarized the retrieved pages"},
    {"Coder", "python", "wrote and executed a script for the requested computation"},
    {"Planner", nullptr, "decomposed the remaining work into ordered subgoals"},
    {"Verifier", nullptr, "checked the intermediate answer against the stated constraints"},
    {"FileSurfer", "file_read", "opened the attached file and extracted the relevant fields"},
    {"Analyst", nullptr, "compared the collected figures and drafted a conclusion"},
    {"Critic", nullptr, "reviewed the previous reasoning for gaps"},
};

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct World {
  std::size_t n = 0;
  std::vector<std::size_t> agent_of;
  std::vector<std::string> agent_names;
  std::vector<bool> tool_use;
  std::vector<double> times;
  // Producers whose output each step consumes.
  std::vector<std::vector<std::size_t>> inputs;
  std::vector<double> sigma;
  std::vector<bool> jitter_subset;
  StructuralModel model;
  std::string goal;
};

World build_world(const SynthSpec& spec, std::size_t index, std::mt19937_64& rng) {
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
  };
  World w;
  w.n = pick(spec.steps, spec.steps_max == 0 ? spec.steps : spec.steps_max);
  const std::size_t a = std::min(w.n, pick(spec.agents, spec.agents_max == 0 ? spec.agents : spec.agents_max));

  std::vector<std::size_t> roles(std::size(kRoles));
  std::iota(roles.begin(), roles.end(), 0);
  std::shuffle(roles.begin(), roles.end(), rng);
  for (std::size_t k = 0; k < a; ++k) {
    if (k < roles.size()) {
      w.agent_names.push_back(kRoles[roles[k]].name);
      w.tool_use.push_back(kRoles[roles[k]].tool != nullptr);
    } else {
      w.agent_names.push_back("Agent" + std::to_string(k + 1));
      w.tool_use.push_back(false);
    }
  }
  // Every agent acts at least once.
  w.agent_of.resize(w.n);
  for (std::size_t j = 0; j < w.n; ++j) w.agent_of[j] = j < a ? j : pick(0, a - 1);
  std::shuffle(w.agent_of.begin(), w.agent_of.end(), rng);

  w.times.resize(w.n);
  double t = 0.0;
  for (std::size_t j = 0; j < w.n; ++j) {
    w.times[j] = std::round(t * 100.0) / 100.0;
    t += uniform(0.5, 3.0);
  }

  std::vector<NodeInfo> nodes;
  for (std::size_t j = 0; j < w.n; ++j) nodes.push_back({j, w.agent_names[w.agent_of[j]], w.times[j]});
  DiGraph data(nodes);
  std::bernoulli_distribution edge(spec.dag_density);
  for (std::size_t j = 1; j < w.n; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (edge(rng)) data.add_edge(i, j);
    }
  }
  for (std::size_t i = 0; i + 1 < w.n; ++i) {
    if (data.children(i).empty()) data.add_edge(i, i + 1);
  }
  w.inputs.resize(w.n);
  for (std::size_t j = 0; j < w.n; ++j) w.inputs[j] = data.parents(j);

  // Performance runs against the data flow: a consumer's performance drives its producers'.
  DiGraph g(nodes);
  for (const auto& e : data.edges()) g.add_edge(e.to, e.from);

  std::vector<Mechanism> mechs(w.n);
  w.sigma.resize(w.n);
  for (std::size_t j = 0; j < w.n; ++j) {
    auto& m = mechs[j];
    m.node = j;
    m.parents = g.parents(j);
    m.amplification_alpha = 0.0;
    const double level = uniform(spec.level_min, spec.level_max);
    if (m.parents.empty()) {
      m.intercept = level;
    } else {
      const double s = uniform(spec.weight_sum_min, spec.weight_sum_max);
      std::vector<double> share(m.parents.size());
      double total = 0.0;
      for (auto& x : share) total += (x = std::exponential_distribution<double>(1.0)(rng) + 1e-3);
      for (auto x : share) m.parent_weights.push_back(s * x / total);
      m.intercept = (1.0 - s) * level;
    }
    m.noise_scale = w.sigma[j] = uniform(spec.noise_min, spec.noise_max);
  }
  auto readout = mean_sink_readout(g);
  w.model = StructuralModel(std::move(g), std::move(mechs), std::move(readout));

  w.jitter_subset.resize(w.n);
  std::bernoulli_distribution in_subset(spec.latent_fraction);
  for (std::size_t j = 0; j < w.n; ++j) w.jitter_subset[j] = in_subset(rng);
  w.goal = "Resolve task Q" + std::to_string(index) + ": gather the required sources and report the final figure.";
  return w;
}

struct Run {
  double tau = 1.0;
  NoiseVector noise;
  Realization values;
};

struct Fault {
  std::size_t step = 0;
  double severity = 0.0;
  bool withhold = false;
};

// One run; nullopt when some value leaves [0, 1].
std::optional<Run> simulate_run(const SynthSpec& spec, const World& w, bool confounded, const Fault* fault,
                                std::mt19937_64& rng) {
  Run r;
  r.tau = std::uniform_real_distribution<double>(0.6, 1.4)(rng);
  const double shift = -spec.complexity_effect * (r.tau - 1.0);
  const double jitter = confounded ? std::normal_distribution<double>(0.0, spec.latent_jitter)(rng) : 0.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  r.noise.nodes.resize(w.n);
  for (std::size_t j = 0; j < w.n; ++j) {
    r.noise.nodes[j] = shift + (w.jitter_subset[j] ? jitter : 0.0) + w.sigma[j] * normal(rng);
  }
  r.noise.outcome = shift;
  if (fault) {
    // Fold the fault into the target's noise so the true SCM reproduces the faulted values.
    std::vector<double> x(w.n, 0.0);
    for (auto j : w.model.order()) {
      const double base = w.model.mechanisms()[j].base(x);
      x[j] = base + r.noise.nodes[j];
      if (j == fault->step) {
        x[j] = fault->withhold ? 0.0 : x[j] * (1.0 - fault->severity);
        r.noise.nodes[j] = x[j] - base;
      }
    }
  }
  r.values = simulate(w.model, r.noise);
  for (double v : r.values.values) {
    if (!(v >= 0.0 && v <= 1.0)) return std::nullopt;
  }
  return r;
}

Run simulate_valid(const SynthSpec& spec, const World& w, bool confounded, const Fault* fault, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    if (auto r = simulate_run(spec, w, confounded, fault, rng)) return std::move(*r);
  }
  throw StageError("synthetic run kept leaving [0, 1]; narrow the mechanism ranges");
}

std::string render_payload(const World& w, std::size_t j, double x, const std::vector<std::size_t>& parents) {
  const auto& name = w.agent_names[w.agent_of[j]];
  std::string verb = "completed its assigned subtask";
  for (const auto& r : kRoles) {
    if (name == r.name) verb = r.verb;
  }
  std::string text = name + " " + verb;
  if (!parents.empty()) {
    text += " using results from steps [";
    for (std::size_t k = 0; k < parents.size(); ++k) text += (k ? ", " : "") + std::to_string(parents[k]);
    text += "]";
  }
  text += ". Self-assessed quality " + fmt2(x) + ".";
  if (x < 0.6) text += " Error: the result looks incomplete and validation failed.";
  return text;
}

ExecutionTrace render_trace(const World& w, const std::string& task, const Run& run, const Fault* fault) {
  ExecutionTrace t;
  t.task = task;
  t.goal = w.goal;
  t.task_complexity = run.tau;
  t.agent_config = {{"temperature", 0.7}};
  t.outcome = run.values.outcome;
  for (std::size_t j = 0; j < w.n; ++j) {
    Step s;
    s.index = j;
    s.agent = w.agent_names[w.agent_of[j]];
    s.timestamp = w.times[j];
    const auto& parents = w.inputs[j];
    const bool withheld = fault && fault->withhold && fault->step == j;
    s.action.payload = withheld ? "" : render_payload(w, j, run.values.values[j], parents);
    if (w.tool_use[w.agent_of[j]]) {
      s.action.kind = "tool_call";
      for (const auto& r : kRoles) {
        if (s.agent == r.name && r.tool) s.action.tool = r.tool;
      }
    } else {
      s.action.kind = "message";
    }
    for (auto p : parents) s.inputs.push_back("step:" + std::to_string(p) + "/out");
    s.outputs = {"out"};
    s.performance = run.values.values[j];
    t.steps.push_back(std::move(s));
  }
  return t;
}

}  // namespace

SynthInstance generate_instance(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5157u};
  std::mt19937_64 rng(seq);
  const World w = build_world(spec, index, rng);
  if (spec.target_step >= 0 && static_cast<std::size_t>(spec.target_step) >= w.n) {
    throw InputError("invalid synth spec: fault.target_step must be < steps");
  }

  SynthInstance inst;
  char name[32];
  std::snprintf(name, sizeof name, "inst_%04zu", index);
  inst.name = name;
  inst.confounded = std::bernoulli_distribution(spec.confounded_fraction)(rng);

  for (std::size_t h = 0; h < spec.history; ++h) {
    const Run run = simulate_valid(spec, w, inst.confounded, nullptr, rng);
    inst.history.push_back(render_trace(w, inst.name + "/h" + std::to_string(h), run, nullptr));
  }

  Fault fault;
  fault.withhold = spec.mode == "withhold";
  std::optional<Run> chosen;
  for (int attempt = 0; attempt < 500; ++attempt) {
    fault.step = spec.target_step >= 0 ? static_cast<std::size_t>(spec.target_step)
                                       : std::uniform_int_distribution<std::size_t>(0, w.n - 1)(rng);
    fault.severity = std::uniform_real_distribution<double>(spec.severity_min, spec.severity_max)(rng);
    chosen = simulate_valid(spec, w, inst.confounded, &fault, rng);
    if (chosen->values.outcome < spec.theta_success) break;
  }
  inst.failed = chosen->values.outcome < spec.theta_success;
  inst.severity = fault.severity;
  inst.trace = render_trace(w, inst.name, *chosen, &fault);
  inst.trace.labels = Labels{w.agent_names[w.agent_of[fault.step]], fault.step};
  inst.truth = w.model;
  return inst;
}

std::vector<SynthInstance> generate_corpus(const SynthSpec& spec, std::size_t count) {
  std::vector<SynthInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_instance(spec, i));
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

}  // namespace

void write_corpus(const std::vector<SynthInstance>& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& inst : corpus) {
    write_text(dir / (inst.name + ".jsonl"), serialize_native(inst.trace));
    std::string hist;
    for (const auto& h : inst.history) hist += serialize_native(h);
    write_text(dir / (inst.name + ".history.jsonl"), hist);
    json dag = json::array();
    for (const auto& e : inst.truth.graph().edges()) dag.push_back({e.from, e.to});
    const json truth = {{"instance", inst.name},
                        {"mistake_agent", inst.trace.labels->mistake_agent},
                        {"mistake_step", inst.trace.labels->mistake_step},
                        {"true_dag", dag},
                        {"confounded", inst.confounded},
                        {"failed", inst.failed},
                        {"severity", inst.severity}};
    write_text(dir / (inst.name + ".truth.json"), truth.dump(2) + "\n");
    write_text(dir / (inst.name + ".scm.json"), to_json(inst.truth).dump() + "\n");
  }
}

std::vector<CorpusEntry> list_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a corpus directory: " + dir.string());
  std::vector<CorpusEntry> out;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    const auto fname = de.path().filename().string();
    const std::string ext = ".jsonl";
    if (fname.size() <= ext.size() || fname.compare(fname.size() - ext.size(), ext.size(), ext) != 0) continue;
    if (fname.find(".history.") != std::string::npos) continue;
    CorpusEntry e;
    e.name = fname.substr(0, fname.size() - ext.size());
    e.trace = de.path();
    if (fs::exists(dir / (e.name + ".history.jsonl"))) e.history = dir / (e.name + ".history.jsonl");
    if (fs::exists(dir / (e.name + ".truth.json"))) e.truth = dir / (e.name + ".truth.json");
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const CorpusEntry& a, const CorpusEntry& b) { return a.name < b.name; });
  return out;
}

GroundTruth read_ground_truth(const fs::path& path) {
  try {
    const auto doc = json::parse(read_file(path.string()));
    GroundTruth g;
    g.instance = doc.at("instance").get<std::string>();
    g.mistake_agent = doc.at("mistake_agent").get<std::string>();
    g.mistake_step = doc.at("mistake_step").get<std::size_t>();
    g.confounded = doc.value("confounded", false);
    return g;
  } catch (const json::exception& e) {
    throw InputError("malformed ground truth " + path.string() + ": " + e.what());
  }
}

EvalMetrics evaluate(const std::vector<std::optional<Prediction>>& predictions, const std::vector<GroundTruth>& truths) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("one prediction slot per instance required");
  EvalMetrics m;
  m.n_instances = truths.size();
  std::size_t agent_hits = 0;
  std::size_t step_hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    InstanceOutcome o;
    o.instance = truths[i].instance;
    o.truth = truths[i];
    o.prediction = predictions[i];
    if (!o.prediction) {
      m.log.push_back("missing prediction for " + o.instance);
    } else {
      o.agent_correct = o.prediction->agent == o.truth.mistake_agent;
      o.step_correct = o.prediction->step == o.truth.mistake_step;
    }
    agent_hits += o.agent_correct;
    step_hits += o.step_correct;
    m.outcomes.push_back(std::move(o));
  }
  if (m.n_instances > 0) {
    m.agent_accuracy = static_cast<double>(agent_hits) / static_cast<double>(m.n_instances);
    m.step_accuracy = static_cast<double>(step_hits) / static_cast<double>(m.n_instances);
  }
  return m;
}

json to_json(const EvalMetrics& m) {
  json outcomes = json::array();
  for (const auto& o : m.outcomes) {
    json rec = {{"instance", o.instance},
                {"true_agent", o.truth.mistake_agent},
                {"true_step", o.truth.mistake_step},
                {"agent_correct", o.agent_correct},
                {"step_correct", o.step_correct}};
    if (o.prediction) {
      rec["predicted_agent"] = o.prediction->agent;
      rec["predicted_step"] = o.prediction->step;
    } else {
      rec["predicted_agent"] = nullptr;
      rec["predicted_step"] = nullptr;
    }
    outcomes.push_back(std::move(rec));
  }
  return {{"agent_accuracy", m.agent_accuracy},
          {"step_accuracy", m.step_accuracy},
          {"n_instances", m.n_instances},
          {"instances", outcomes},
          {"log", m.log}};
}

Prediction random_baseline(const ExecutionTrace& trace, std::uint64_t seed) {
  const auto agents = trace.agents();
  if (agents.empty() || trace.steps.empty()) throw InputError("random baseline needs a non-empty trace");
  std::mt19937_64 rng(seed);
  Prediction p;
  p.agent = agents[std::uniform_int_distribution<std::size_t>(0, agents.size() - 1)(rng)];
  p.step = std::uniform_int_distribution<std::size_t>(0, trace.steps.size() - 1)(rng);
  return p;
}

}  // namespace masattr
