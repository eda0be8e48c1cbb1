#include <doctest.h>

#include <cmath>
#include <random>

#include "masattr/features.hpp"
#include "masattr/synth.hpp"
#include "masattr/trace.hpp"

using namespace masattr;

namespace {

ExecutionTrace five_step() { return parse_native_trace(read_file(std::string(MASATTR_FIXTURES) + "/native/five_step.jsonl")); }

FeatureSet features_of(const ExecutionTrace& t) {
  const LexicalSimilarity lexical;
  return extract_features(t, build_data_graph(t), &lexical);
}

class FailingProvider : public SimilarityProvider {
 public:
  std::string name() const override { return "failing"; }
  double similarity(const std::string&, const std::string&) const override { throw ProviderError("unreachable"); }
};

std::vector<ExecutionTrace> synthetic_traces(std::size_t count) {
  SynthSpec spec;
  spec.agents = 3;
  spec.agents_max = 6;
  spec.steps = 6;
  spec.steps_max = 30;
  spec.history = 0;
  spec.seed = 41;
  std::vector<ExecutionTrace> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_instance(spec, i).trace);
  return out;
}

}  // namespace

TEST_CASE("hand-computed raw features of the five-step fixture") {
  const auto fs = features_of(five_step());
  REQUIRE(fs.raw.size() == 5);
  CHECK_FALSE(fs.degraded);
  using A4 = std::array<double, 4>;
  using A3 = std::array<double, 3>;
  CHECK(fs.raw[0].tech == A4{27, 0, 0, 0});
  CHECK(fs.raw[1].tech == A4{34, 1, 1, 1});
  CHECK(fs.raw[2].tech == A4{25, 1, 2, 2});
  CHECK(fs.raw[3].tech == A4{0, 0, 0, 0});
  CHECK(fs.raw[4].tech == A4{24, 0, 0, 0});

  CHECK(fs.raw[0].interact == A3{0, 2, 0});
  CHECK(fs.raw[1].interact == A3{1, 1, 1});
  CHECK(fs.raw[2].interact == A3{1, 1, 1});
  CHECK(fs.raw[3].interact == A3{0, 0, 0});
  CHECK(fs.raw[4].interact == A3{2, 0, 1});

  CHECK(fs.raw[0].temporal == A3{2.0, 0.0, 0.0});
  CHECK(fs.raw[1].temporal == A3{1.0, 2.0, 0.2});
  CHECK(fs.raw[2].temporal == A3{0.5, 1.0, 0.4});
  CHECK(fs.raw[3].temporal == A3{2.5, 0.5, 0.6});
  CHECK(fs.raw[4].temporal == A3{0.0, 2.5, 0.8});

  const A3 expected_semantic[5] = {
      {0.5, 0.0, 1.0}, {2.0 / 7.0, 1.0 / 3.0, 2.0 / 3.0}, {0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}, {0.25, 0.0, 5.0 / 7.0}};
  for (std::size_t j = 0; j < 5; ++j) {
    CAPTURE(j);
    for (std::size_t k = 0; k < 3; ++k) CHECK(fs.raw[j].semantic[k] == doctest::Approx(expected_semantic[j][k]).epsilon(1e-15));
  }
}

TEST_CASE("empty payload and isolated step give zero blocks") {
  const auto fs = features_of(five_step());
  for (double v : fs.raw[3].tech) CHECK(v == 0.0);
  for (double v : fs.raw[3].interact) CHECK(v == 0.0);
}

TEST_CASE("flat layout round trips") {
  const auto fs = features_of(five_step());
  for (const auto& f : fs.raw) CHECK(StepFeatureVector::from_flat(f.flat()).flat() == f.flat());
}

TEST_CASE("standardization gives zero mean and unit variance") {
  for (const auto& t : synthetic_traces(20)) {
    const auto fs = features_of(t);
    REQUIRE(fs.standardized.size() == t.steps.size());
    const double n = static_cast<double>(t.steps.size());
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      double mean = 0.0;
      double raw_min = fs.raw[0].flat()[k];
      double raw_max = raw_min;
      for (std::size_t j = 0; j < fs.raw.size(); ++j) {
        mean += fs.standardized[j].flat()[k];
        raw_min = std::min(raw_min, fs.raw[j].flat()[k]);
        raw_max = std::max(raw_max, fs.raw[j].flat()[k]);
      }
      mean /= n;
      double var = 0.0;
      for (const auto& f : fs.standardized) var += (f.flat()[k] - mean) * (f.flat()[k] - mean);
      var /= n;
      CHECK(std::abs(mean) <= 1e-9);
      if (raw_min == raw_max) {
        CHECK(var == 0.0);
      } else {
        CHECK(std::abs(var - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("renaming agents leaves non-semantic features unchanged") {
  for (const auto& t : synthetic_traces(10)) {
    auto renamed = t;
    for (auto& s : renamed.steps) s.agent = "renamed_" + s.agent;
    if (renamed.labels) renamed.labels->mistake_agent = "renamed_" + renamed.labels->mistake_agent;
    const auto a = features_of(t);
    const auto b = features_of(renamed);
    for (std::size_t j = 0; j < t.steps.size(); ++j) {
      CHECK(a.raw[j].tech == b.raw[j].tech);
      CHECK(a.raw[j].interact == b.raw[j].interact);
      CHECK(a.raw[j].temporal == b.raw[j].temporal);
    }
  }
}

TEST_CASE("missing or failing provider degrades the semantic block") {
  const auto t = five_step();
  const auto g = build_data_graph(t);
  const FailingProvider failing;
  for (const SimilarityProvider* p : {static_cast<const SimilarityProvider*>(&failing),
                                      static_cast<const SimilarityProvider*>(nullptr)}) {
    const auto fs = extract_features(t, g, p);
    CHECK(fs.degraded);
    CHECK_FALSE(fs.degraded_reason.empty());
    for (const auto& f : fs.raw) {
      for (double v : f.semantic) CHECK(v == 0.0);
    }
    CHECK(fs.raw[1].tech == features_of(t).raw[1].tech);
  }
}

TEST_CASE("context encoder is deterministic") {
  const auto t = five_step();
  const auto fs = features_of(t);
  const auto a = encode_context(t, fs);
  const auto b = encode_context(t, features_of(t));
  CHECK(a.values == b.values);
  CHECK(a.values.size() == 16);
  CHECK(a.provenance == "deterministic");
  for (double v : a.values) CHECK(std::isfinite(v));
}

TEST_CASE("traces differing only in task complexity encode differently") {
  auto t = five_step();
  const auto a = encode_context(t, features_of(t));
  t.task_complexity += 1.0;
  const auto b = encode_context(t, features_of(t));
  CHECK(a.values != b.values);
}

TEST_CASE("projection is orthonormal and maps zero to zero") {
  const DeterministicContextEncoder enc;
  for (std::size_t input_dim : {4, 16, 23, 40}) {
    CAPTURE(input_dim);
    const auto p = enc.projection(input_dim);
    CHECK(p.rows() == 16);
    CHECK(p.cols() == static_cast<Eigen::Index>(input_dim));
    const Eigen::MatrixXd gram = input_dim >= 16 ? Eigen::MatrixXd(p * p.transpose()) : Eigen::MatrixXd(p.transpose() * p);
    CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((p * Eigen::VectorXd::Zero(static_cast<Eigen::Index>(input_dim))).norm() == 0.0);
  }
}

TEST_CASE("context vector never exceeds the norm of its input") {
  const DeterministicContextEncoder enc;
  for (const auto& t : synthetic_traces(30)) {
    const auto fs = features_of(t);
    const auto in = DeterministicContextEncoder::pooled_input(t, fs);
    const auto out = enc.encode(t, fs);
    double in_norm = 0.0;
    double out_norm = 0.0;
    for (double v : in) in_norm += v * v;
    for (double v : out.values) out_norm += v * v;
    CHECK(std::sqrt(out_norm) <= std::sqrt(in_norm) * (1.0 + 1e-12));
  }
}
