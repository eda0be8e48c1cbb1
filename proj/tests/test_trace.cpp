#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "masattr/errors.hpp"
#include "masattr/synth.hpp"
#include "masattr/text.hpp"
#include "masattr/trace.hpp"

using namespace masattr;

namespace {

std::string fixture(const std::string& rel) { return read_file(std::string(MASATTR_FIXTURES) + "/" + rel); }

std::size_t resolved_link_count(const ExecutionTrace& t) {
  std::size_t n = 0;
  for (std::size_t j = 0; j < t.steps.size(); ++j) n += resolved_producers(t, j).size();
  return n;
}

ExecutionTrace text_trace(const std::vector<std::string>& payloads) {
  ExecutionTrace t;
  t.task = "text";
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    Step s;
    s.index = i;
    s.agent = i % 2 ? "B" : "A";
    s.action = {"message", payloads[i], std::nullopt};
    s.timestamp = static_cast<double>(i);
    t.steps.push_back(s);
  }
  return t;
}

std::set<std::pair<std::size_t, std::size_t>> inferred_links(const ExecutionTrace& t) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& s : t.steps) {
    for (auto i : s.inferred_inputs) out.insert({i, s.index});
  }
  return out;
}

}  // namespace

TEST_CASE("minimal native trace has one resolvable link") {
  const auto t = parse_native_trace(fixture("native/minimal.jsonl"));
  CHECK(t.steps.size() == 2);
  CHECK(t.agents() == std::vector<std::string>{"A", "B"});
  CHECK(resolved_link_count(t) == 1);
  CHECK(resolved_producers(t, 1) == std::vector<std::size_t>{0});
  CHECK(t.outcome == doctest::Approx(0.3));
}

TEST_CASE("decreasing timestamp is reported with its index") {
  try {
    parse_native_trace(fixture("native/bad_timestamp.jsonl"));
    FAIL("expected an invariant error");
  } catch (const InvariantError& e) {
    CHECK(std::string(e.what()).find("nondecreasing timestamps violated at index 3") != std::string::npos);
  }
}

TEST_CASE("malformed record reports its line number") {
  const std::string text =
      "{\"task\":\"x\",\"complexity\":1,\"agent_config\":{},\"outcome\":0.1}\n"
      "{\"idx\":0,\"agent\":\"A\",\"action\":{\"kind\":\"m\",\"payload\":\"a\"},\"t\":0,\"ctx\":{},\"in\":[],\"out\":[]}\n"
      "{\"idx\":1,\"agent\":\n";
  try {
    parse_native_trace(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("trace invariants") {
  auto t = parse_native_trace(fixture("native/minimal.jsonl"));
  SUBCASE("single step") {
    t.steps.pop_back();
    CHECK_THROWS_AS(validate(t), InvariantError);
  }
  SUBCASE("performance out of range") {
    t.steps[0].performance = 1.5;
    CHECK_THROWS_AS(validate(t), InvariantError);
  }
  SUBCASE("label on unknown agent") {
    t.labels = Labels{"Z", 0};
    CHECK_THROWS_AS(validate(t), InvariantError);
  }
  SUBCASE("label step out of range") {
    t.labels = Labels{"A", 5};
    CHECK_THROWS_AS(validate(t), InvariantError);
  }
  SUBCASE("forward reference") {
    t.steps[0].inputs = {"step:1/summary"};
    CHECK_THROWS_AS(validate(t), InvariantError);
  }
  SUBCASE("non-contiguous index") {
    t.steps[1].index = 4;
    CHECK_THROWS_AS(validate(t), InvariantError);
  }
}

TEST_CASE("unknown step fields are preserved in context") {
  const std::string text =
      "{\"task\":\"x\",\"complexity\":1,\"agent_config\":{},\"outcome\":0.1}\n"
      "{\"idx\":0,\"agent\":\"A\",\"action\":{\"kind\":\"m\",\"payload\":\"a\"},\"t\":0,\"ctx\":{},\"in\":[],\"out\":[],"
      "\"latency_ms\":42}\n"
      "{\"idx\":1,\"agent\":\"B\",\"action\":{\"kind\":\"m\",\"payload\":\"b\"},\"t\":1,\"ctx\":{},\"in\":[],\"out\":[]}\n";
  const auto t = parse_native_trace(text);
  CHECK(t.steps[0].context.at("latency_ms") == 42);
}

TEST_CASE("native round trip is stable on every fixture") {
  for (const auto* name : {"native/minimal.jsonl", "native/five_step.jsonl", "native/chain_perf.jsonl",
                           "native/synth_130.jsonl"}) {
    CAPTURE(name);
    const auto a = parse_native_trace(fixture(name));
    const auto text = serialize_native(a);
    const auto b = parse_native_trace(text);
    CHECK(a == b);
    CHECK(serialize_native(b) == text);
  }
}

TEST_CASE("130-step synthetic fixture parses") {
  const auto t = parse_native_trace(fixture("native/synth_130.jsonl"));
  CHECK(t.steps.size() == 130);
  REQUIRE(t.labels);
}

TEST_CASE("synthetic corpus round trips through the native format") {
  SynthSpec spec;
  spec.agents = 3;
  spec.agents_max = 6;
  spec.steps = 5;
  spec.steps_max = 25;
  spec.history = 3;
  spec.seed = 99;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto inst = generate_instance(spec, i);
    CHECK(parse_native_trace(serialize_native(inst.trace)) == inst.trace);
    for (const auto& h : inst.history) CHECK(parse_native_trace(serialize_native(h)) == h);
  }
}

TEST_CASE("concatenated stream splits on headers") {
  const auto one = fixture("native/minimal.jsonl");
  const auto traces = parse_native_stream(one + one);
  CHECK(traces.size() == 2);
  CHECK(traces[0] == traces[1]);
}

TEST_CASE("Who&When instance with seven entries") {
  const auto t = parse_whowhen(fixture("whowhen/seven_steps.json"));
  CHECK(t.steps.size() == 7);
  REQUIRE(t.labels);
  CHECK(t.labels->mistake_agent == "WebSurfer");
  CHECK(t.labels->mistake_step == 3);
  CHECK(t.steps[3].agent == "WebSurfer");
  // Role suffixes are stripped so one agent maps to one player.
  CHECK(t.steps[1].agent == "Orchestrator");
  CHECK(t.steps[0].agent == "human");
  CHECK(t.steps[6].timestamp == 6.0);
  CHECK(t.outcome == 0.0);
  CHECK(t.task == "ww-fixture-001");
}

TEST_CASE("Who&When schema fixture set") {
  SUBCASE("no annotations") {
    const auto t = parse_whowhen(fixture("whowhen/no_annotations.json"));
    CHECK(t.steps.size() == 3);
    CHECK_FALSE(t.labels);
  }
  SUBCASE("role only, integer step") {
    const auto t = parse_whowhen(fixture("whowhen/role_only_int_step.json"));
    CHECK(t.steps[1].agent == "Expert");
    REQUIRE(t.labels);
    CHECK(t.labels->mistake_step == 1);
  }
  SUBCASE("explicit timestamps") {
    const auto t = parse_whowhen(fixture("whowhen/timestamps.json"));
    CHECK(t.steps[1].timestamp == 12.5);
    CHECK(t.outcome == 1.0);
  }
  SUBCASE("empty history") {
    try {
      parse_whowhen(fixture("whowhen/empty_history.json"));
      FAIL("expected an input error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()) == "missing or empty history");
    }
  }
  SUBCASE("annotation out of range") {
    CHECK_THROWS_AS(parse_whowhen(fixture("whowhen/step_out_of_range.json")), InputError);
  }
}

TEST_CASE("every Who&When fixture either parses or fails with an input error") {
  for (const auto& de : std::filesystem::directory_iterator(std::string(MASATTR_FIXTURES) + "/whowhen")) {
    const auto name = de.path().filename().string();
    CAPTURE(name);
    const auto text = read_file(de.path().string());
    const bool bad = name == "empty_history.json" || name == "step_out_of_range.json";
    if (bad) {
      CHECK_THROWS_AS(parse_whowhen(text), InputError);
    } else {
      CHECK_NOTHROW(parse_whowhen(text));
    }
  }
}

TEST_CASE("token overlap link inference") {
  CHECK(jaccard_similarity("paris population 2.1M", "paris population") == doctest::Approx(0.5));
  const auto t = text_trace({"paris population 2.1M", "paris population"});
  SUBCASE("threshold 0.5 adds the link") {
    CHECK(inferred_links(infer_io_links(t, 0.5)) == std::set<std::pair<std::size_t, std::size_t>>{{0, 1}});
  }
  SUBCASE("threshold 1.0 on different payloads adds nothing") { CHECK(inferred_links(infer_io_links(t, 1.0)).empty()); }
}

TEST_CASE("link inference leaves fully explicit traces untouched") {
  const auto t = parse_native_trace(fixture("native/chain_perf.jsonl"));
  CHECK(infer_io_links(t, 0.0) == t);
}

TEST_CASE("link inference is monotone in the threshold and never points backward") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::string> payloads;
    for (int i = 0; i < 12; ++i) {
      std::string p;
      const int len = std::uniform_int_distribution<int>(1, 5)(rng);
      for (int k = 0; k < len; ++k) p += vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)] + " ";
      payloads.push_back(p);
    }
    const auto t = text_trace(payloads);
    std::set<std::pair<std::size_t, std::size_t>> prev;
    bool first = true;
    for (double th : {1.0, 0.8, 0.6, 0.4, 0.2, 0.05}) {
      const auto links = inferred_links(infer_io_links(t, th));
      for (const auto& [i, j] : links) CHECK(i < j);
      if (!first) {
        for (const auto& l : prev) CHECK(links.count(l) == 1);
      }
      prev = links;
      first = false;
    }
  }
}

TEST_CASE("artifact references") {
  const auto r = parse_artifact_ref("step:12/out");
  REQUIRE(r);
  CHECK(r->step == 12);
  CHECK(r->artifact == "out");
  CHECK_FALSE(parse_artifact_ref("stage:1/out"));
  CHECK_FALSE(parse_artifact_ref("step:x/out"));
}

TEST_CASE("text helpers") {
  CHECK(tokenize("Paris population 2.1M") == std::vector<std::string>{"paris", "population", "2", "1m"});
  CHECK(bracket_depth("f(g([x]))") == 3);
  CHECK(bracket_depth(")(") == 1);
  CHECK(error_token_count("Error: request failed after timeout") == 3);
  CHECK(jaccard_similarity("", "") == 0.0);
}
