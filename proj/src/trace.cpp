#include "masattr/trace.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "masattr/errors.hpp"
#include "masattr/text.hpp"

namespace masattr {

using nlohmann::json;

std::vector<std::string> ExecutionTrace::agents() const {
  std::vector<std::string> out;
  for (const auto& s : steps) {
    if (std::find(out.begin(), out.end(), s.agent) == out.end()) out.push_back(s.agent);
  }
  return out;
}

std::size_t ExecutionTrace::first_appearance(std::string_view agent) const {
  for (const auto& s : steps) {
    if (s.agent == agent) return s.index;
  }
  return steps.size();
}

std::optional<ArtifactRef> parse_artifact_ref(std::string_view ref) {
  constexpr std::string_view prefix = "step:";
  if (ref.substr(0, prefix.size()) != prefix) return std::nullopt;
  ref.remove_prefix(prefix.size());
  const auto slash = ref.find('/');
  if (slash == std::string_view::npos || slash == 0) return std::nullopt;
  std::size_t idx = 0;
  const auto* first = ref.data();
  const auto* last = ref.data() + slash;
  const auto [ptr, ec] = std::from_chars(first, last, idx);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return ArtifactRef{idx, std::string(ref.substr(slash + 1))};
}

namespace {

bool has_output(const Step& s, std::string_view artifact) {
  return std::find(s.outputs.begin(), s.outputs.end(), artifact) != s.outputs.end();
}

}  // namespace

void validate(const ExecutionTrace& trace) {
  if (trace.steps.size() < 2) {
    throw InvariantError("trace must contain at least 2 steps (found " +
                         std::to_string(trace.steps.size()) + ")");
  }
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    if (s.index != i) {
      throw InvariantError("contiguous step indices violated at position " + std::to_string(i) +
                           " (idx " + std::to_string(s.index) + ")");
    }
    if (s.agent.empty()) {
      throw InvariantError("step agent must be non-empty at index " + std::to_string(i));
    }
    if (i > 0 && s.timestamp < trace.steps[i - 1].timestamp) {
      throw InvariantError("nondecreasing timestamps violated at index " + std::to_string(i));
    }
    if (s.performance && (*s.performance < 0.0 || *s.performance > 1.0)) {
      throw InvariantError("performance in [0,1] violated at index " + std::to_string(i));
    }
    for (const auto& ref : s.inputs) {
      const auto parsed = parse_artifact_ref(ref);
      if (!parsed || parsed->step >= trace.steps.size()) continue;
      if (!has_output(trace.steps[parsed->step], parsed->artifact)) continue;
      if (parsed->step >= i) {
        throw InvariantError("input reference must resolve to a strictly earlier step at index " +
                             std::to_string(i) + " (" + ref + ")");
      }
    }
  }
  if (trace.labels) {
    if (trace.labels->mistake_step >= trace.steps.size()) {
      throw InvariantError("label mistake_step out of range: " +
                           std::to_string(trace.labels->mistake_step));
    }
    const auto agents = trace.agents();
    if (std::find(agents.begin(), agents.end(), trace.labels->mistake_agent) == agents.end()) {
      throw InvariantError("label mistake_agent does not appear in steps: " +
                           trace.labels->mistake_agent);
    }
  }
}

std::vector<std::size_t> resolved_producers(const ExecutionTrace& trace, std::size_t j) {
  std::vector<std::size_t> out;
  const auto& step = trace.steps.at(j);
  for (const auto& ref : step.inputs) {
    const auto parsed = parse_artifact_ref(ref);
    if (!parsed || parsed->step >= j) continue;
    if (!has_output(trace.steps[parsed->step], parsed->artifact)) continue;
    out.push_back(parsed->step);
  }
  for (auto i : step.inferred_inputs) {
    if (i < j) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

bool is_header(const json& obj) { return obj.is_object() && !obj.contains("idx"); }

double number_field(const json& obj, const char* key, double fallback, std::size_t line) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(line, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::string string_field(const json& obj, const char* key, std::size_t line, bool required) {
  if (!obj.contains(key)) {
    if (required) throw ParseError(line, std::string("missing field '") + key + "'");
    return {};
  }
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& obj, const char* key, std::size_t line) {
  std::vector<std::string> out;
  if (!obj.contains(key)) return out;
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ParseError(line, std::string("field '") + key + "' must be an array");
  for (const auto& e : v) {
    if (!e.is_string()) throw ParseError(line, std::string("field '") + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

void read_header(const json& h, std::size_t line, ExecutionTrace& trace) {
  trace.task = string_field(h, "task", line, false);
  trace.goal = string_field(h, "goal", line, false);
  trace.task_complexity = number_field(h, "complexity", 1.0, line);
  trace.outcome = number_field(h, "outcome", 0.0, line);
  if (h.contains("agent_config")) {
    const auto& cfg = h.at("agent_config");
    if (!cfg.is_object()) throw ParseError(line, "field 'agent_config' must be an object");
    for (const auto& [k, v] : cfg.items()) {
      if (!v.is_number()) throw ParseError(line, "agent_config." + k + " must be a number");
      trace.agent_config[k] = v.get<double>();
    }
  }
  if (h.contains("labels") && !h.at("labels").is_null()) {
    const auto& lab = h.at("labels");
    if (!lab.is_object() || !lab.contains("mistake_agent") || !lab.contains("mistake_step") ||
        !lab.at("mistake_agent").is_string() || !lab.at("mistake_step").is_number_unsigned()) {
      throw ParseError(line, "labels must be {mistake_agent: string, mistake_step: uint}");
    }
    trace.labels = Labels{lab.at("mistake_agent").get<std::string>(),
                          lab.at("mistake_step").get<std::size_t>()};
  }
  static const std::set<std::string> known = {"task", "goal", "complexity", "outcome", "agent_config",
                                              "labels"};
  for (const auto& [k, v] : h.items()) {
    if (!known.count(k)) trace.metadata[k] = v;
  }
}

Step read_step(const json& o, std::size_t line) {
  Step s;
  const auto& idx = o.at("idx");
  if (!idx.is_number_unsigned()) throw ParseError(line, "field 'idx' must be a non-negative integer");
  s.index = idx.get<std::size_t>();
  s.agent = string_field(o, "agent", line, true);
  if (!o.contains("action") || !o.at("action").is_object()) {
    throw ParseError(line, "missing object field 'action'");
  }
  const auto& a = o.at("action");
  s.action.kind = string_field(a, "kind", line, false);
  s.action.payload = string_field(a, "payload", line, false);
  if (a.contains("tool") && !a.at("tool").is_null()) s.action.tool = string_field(a, "tool", line, true);
  if (!o.contains("t")) throw ParseError(line, "missing field 't'");
  s.timestamp = number_field(o, "t", 0.0, line);
  if (o.contains("ctx")) {
    if (!o.at("ctx").is_object()) throw ParseError(line, "field 'ctx' must be an object");
    s.context = o.at("ctx");
  }
  s.inputs = string_list(o, "in", line);
  s.outputs = string_list(o, "out", line);
  if (o.contains("perf") && !o.at("perf").is_null()) s.performance = number_field(o, "perf", 0.0, line);
  static const std::set<std::string> known = {"idx", "agent", "action", "t", "ctx", "in", "out", "perf"};
  for (const auto& [k, v] : o.items()) {
    if (!known.count(k) && !s.context.contains(k)) s.context[k] = v;
  }
  return s;
}

}  // namespace

std::vector<ExecutionTrace> parse_native_stream(std::string_view text) {
  std::vector<ExecutionTrace> traces;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool open = false;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON record: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "record must be a JSON object");
    if (is_header(obj)) {
      traces.emplace_back();
      read_header(obj, line_no, traces.back());
      open = true;
      continue;
    }
    if (!open) throw ParseError(line_no, "step record before header");
    traces.back().steps.push_back(read_step(obj, line_no));
  }
  if (traces.empty()) throw ParseError(line_no, "no header record found");
  for (const auto& t : traces) validate(t);
  return traces;
}

ExecutionTrace parse_native_trace(std::string_view text) {
  auto traces = parse_native_stream(text);
  if (traces.size() != 1) {
    throw InputError("expected a single trace, found " + std::to_string(traces.size()));
  }
  return std::move(traces.front());
}

std::string serialize_native(const ExecutionTrace& trace) {
  std::ostringstream out;
  json header = trace.metadata;
  header["task"] = trace.task;
  if (!trace.goal.empty()) header["goal"] = trace.goal;
  header["complexity"] = trace.task_complexity;
  header["outcome"] = trace.outcome;
  header["agent_config"] = json::object();
  for (const auto& [k, v] : trace.agent_config) header["agent_config"][k] = v;
  if (trace.labels) {
    header["labels"] = {{"mistake_agent", trace.labels->mistake_agent},
                        {"mistake_step", trace.labels->mistake_step}};
  }
  out << header.dump() << '\n';
  for (const auto& s : trace.steps) {
    json o;
    o["idx"] = s.index;
    o["agent"] = s.agent;
    o["action"] = {{"kind", s.action.kind}, {"payload", s.action.payload}};
    if (s.action.tool) o["action"]["tool"] = *s.action.tool;
    o["t"] = s.timestamp;
    o["ctx"] = s.context;
    o["in"] = s.inputs;
    o["out"] = s.outputs;
    if (s.performance) o["perf"] = *s.performance;
    out << o.dump() << '\n';
  }
  return out.str();
}

namespace {

// "Orchestrator (thought)" and "Orchestrator (-> WebSurfer)" both name the Orchestrator.
std::string normalize_agent(std::string name) {
  const auto paren = name.find(" (");
  if (paren != std::string::npos && paren > 0) name.erase(paren);
  while (!name.empty() && name.back() == ' ') name.pop_back();
  return name;
}

std::optional<std::size_t> annotation_step(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i < 0) throw InputError("annotation mistake_step is negative");
    return static_cast<std::size_t>(i);
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), idx);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw InputError("annotation mistake_step is not an integer: " + s);
    }
    return idx;
  }
  return std::nullopt;
}

}  // namespace

ExecutionTrace parse_whowhen(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(1, std::string("malformed JSON document: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("Who&When instance must be a JSON object");
  if (!doc.contains("history") || !doc.at("history").is_array() || doc.at("history").empty()) {
    throw InputError("missing or empty history");
  }
  ExecutionTrace trace;
  const auto& history = doc.at("history");
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& e = history[i];
    if (!e.is_object()) throw InputError("history entry " + std::to_string(i) + " is not an object");
    Step s;
    s.index = i;
    std::string agent;
    if (e.contains("name") && e.at("name").is_string()) agent = e.at("name").get<std::string>();
    if (agent.empty() && e.contains("role") && e.at("role").is_string()) {
      agent = e.at("role").get<std::string>();
    }
    s.agent = normalize_agent(agent);
    if (s.agent.empty()) s.agent = "unknown";
    s.action.kind = "message";
    if (e.contains("content")) {
      const auto& c = e.at("content");
      s.action.payload = c.is_string() ? c.get<std::string>() : c.dump();
    }
    if (e.contains("timestamp") && e.at("timestamp").is_number()) {
      s.timestamp = e.at("timestamp").get<double>();
    } else {
      s.timestamp = static_cast<double>(i);
    }
    if (e.contains("role") && e.at("role").is_string()) s.context["role"] = e.at("role");
    s.outputs.push_back("m" + std::to_string(i));
    trace.steps.push_back(std::move(s));
  }
  // Some instances carry wall-clock timestamps that are not monotone; fall back to ordinals.
  for (std::size_t i = 1; i < trace.steps.size(); ++i) {
    if (trace.steps[i].timestamp < trace.steps[i - 1].timestamp) {
      for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        trace.steps[k].timestamp = static_cast<double>(k);
      }
      break;
    }
  }
  trace.task = doc.contains("question_ID") && doc.at("question_ID").is_string()
                   ? doc.at("question_ID").get<std::string>()
                   : std::string("whowhen");
  if (doc.contains("question") && doc.at("question").is_string()) {
    trace.goal = doc.at("question").get<std::string>();
  }
  trace.outcome = doc.contains("is_correct") && doc.at("is_correct").is_boolean() &&
                          doc.at("is_correct").get<bool>()
                      ? 1.0
                      : 0.0;
  const bool has_agent = doc.contains("mistake_agent") && doc.at("mistake_agent").is_string();
  const bool has_step = doc.contains("mistake_step") && !doc.at("mistake_step").is_null();
  if (has_agent && has_step) {
    const auto step = annotation_step(doc.at("mistake_step"));
    if (!step || *step >= trace.steps.size()) {
      throw InputError("annotation mistake_step references out-of-range step");
    }
    trace.labels = Labels{normalize_agent(doc.at("mistake_agent").get<std::string>()), *step};
  }
  for (const auto& [k, v] : doc.items()) {
    if (k != "history") trace.metadata[k] = v;
  }
  validate(trace);
  return trace;
}

ExecutionTrace infer_io_links(ExecutionTrace trace, double overlap_threshold) {
  for (std::size_t j = 1; j < trace.steps.size(); ++j) {
    auto& target = trace.steps[j];
    if (!target.inputs.empty()) continue;
    for (std::size_t i = 0; i < j; ++i) {
      const double overlap = jaccard_similarity(trace.steps[i].action.payload, target.action.payload);
      if (overlap > 0.0 && overlap >= overlap_threshold) target.inferred_inputs.insert(i);
    }
  }
  return trace;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace masattr
