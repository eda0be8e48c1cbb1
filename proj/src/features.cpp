#include "masattr/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "masattr/text.hpp"

namespace masattr {

std::array<double, kFeatureDim> StepFeatureVector::flat() const {
  std::array<double, kFeatureDim> v{};
  auto it = std::copy(tech.begin(), tech.end(), v.begin());
  it = std::copy(interact.begin(), interact.end(), it);
  it = std::copy(temporal.begin(), temporal.end(), it);
  std::copy(semantic.begin(), semantic.end(), it);
  return v;
}

StepFeatureVector StepFeatureVector::from_flat(const std::array<double, kFeatureDim>& v) {
  StepFeatureVector f;
  std::copy(v.begin(), v.begin() + 4, f.tech.begin());
  std::copy(v.begin() + 4, v.begin() + 7, f.interact.begin());
  std::copy(v.begin() + 7, v.begin() + 10, f.temporal.begin());
  std::copy(v.begin() + 10, v.end(), f.semantic.begin());
  return f;
}

namespace {

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

double signed_log1p(double x) { return x < 0 ? -std::log1p(-x) : std::log1p(x); }

}  // namespace

std::vector<StepFeatureVector> standardize(const std::vector<StepFeatureVector>& raw) {
  const std::size_t n = raw.size();
  std::vector<std::array<double, kFeatureDim>> rows;
  rows.reserve(n);
  for (const auto& f : raw) rows.push_back(f.flat());
  std::vector<std::array<double, kFeatureDim>> out(n);
  for (std::size_t k = 0; k < kFeatureDim; ++k) {
    double mean = 0.0;
    for (const auto& r : rows) mean += r[k];
    mean /= static_cast<double>(std::max<std::size_t>(n, 1));
    double var = 0.0;
    for (const auto& r : rows) var += (r[k] - mean) * (r[k] - mean);
    var /= static_cast<double>(std::max<std::size_t>(n, 1));
    const double sd = std::sqrt(var);
    const bool constant = sd <= 1e-12 * std::max(1.0, std::abs(mean));
    for (std::size_t i = 0; i < n; ++i) out[i][k] = constant ? 0.0 : (rows[i][k] - mean) / sd;
  }
  std::vector<StepFeatureVector> result;
  result.reserve(n);
  for (const auto& r : out) result.push_back(StepFeatureVector::from_flat(r));
  return result;
}

FeatureSet extract_features(const ExecutionTrace& trace, const DataDependencyGraph& graph,
                            const SimilarityProvider* provider, const FeatureOptions& options) {
  const auto& steps = trace.steps;
  const std::size_t n = steps.size();
  FeatureSet fs;
  fs.raw.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& s = steps[j];
    auto& f = fs.raw[j];
    const auto& payload = s.action.payload;
    f.tech = {static_cast<double>(payload.size()),
              static_cast<double>((s.action.tool ? 1 : 0) + count_occurrences(payload, "tool_call")),
              static_cast<double>(bracket_depth(payload)), static_cast<double>(error_token_count(payload))};

    const auto parents = graph.graph.parents(j);
    std::set<std::string> upstream;
    for (auto p : parents) {
      if (j - p <= options.upstream_window && steps[p].agent != s.agent) upstream.insert(steps[p].agent);
    }
    f.interact = {static_cast<double>(parents.size()), static_cast<double>(graph.graph.children(j).size()),
                  static_cast<double>(upstream.size())};

    double duration = 0.0;
    if (s.context.is_object() && s.context.contains("duration") && s.context["duration"].is_number()) {
      duration = s.context["duration"].get<double>();
    } else if (j + 1 < n) {
      duration = steps[j + 1].timestamp - s.timestamp;
    }
    const double gap = j == 0 ? 0.0 : s.timestamp - steps[j - 1].timestamp;
    f.temporal = {duration, gap, static_cast<double>(j) / static_cast<double>(n)};
  }

  // Semantic block: goal similarity, similarity to the previous step, 1 - max similarity to any earlier step.
  const std::string goal = !trace.goal.empty() ? trace.goal : (n > 0 ? steps[0].action.payload : std::string());
  std::vector<TextPair> pairs;
  for (std::size_t j = 0; j < n; ++j) {
    pairs.emplace_back(goal, steps[j].action.payload);
    for (std::size_t i = 0; i < j; ++i) pairs.emplace_back(steps[i].action.payload, steps[j].action.payload);
  }
  std::vector<double> sims;
  if (!provider) {
    fs.degraded = true;
    fs.degraded_reason = "no similarity provider available";
  } else {
    try {
      sims = provider->similarity_batch(pairs);
    } catch (const ProviderError& e) {
      fs.degraded = true;
      fs.degraded_reason = e.what();
    }
  }
  if (!fs.degraded) {
    std::size_t at = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double to_goal = sims[at++];
      double prior = 0.0;
      double max_earlier = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < j; ++i) {
        const double s = sims[at++];
        max_earlier = std::max(max_earlier, s);
        if (i + 1 == j) prior = s;
      }
      fs.raw[j].semantic = {to_goal, prior, j == 0 ? 1.0 : 1.0 - max_earlier};
    }
  }
  fs.standardized = standardize(fs.raw);
  return fs;
}

DeterministicContextEncoder::DeterministicContextEncoder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw std::invalid_argument("context dimension must be positive");
}

std::vector<double> DeterministicContextEncoder::pooled_input(const ExecutionTrace& trace,
                                                              const FeatureSet& features) {
  std::vector<double> in;
  in.push_back(trace.task_complexity);
  in.push_back(static_cast<double>(trace.steps.size()));
  in.push_back(static_cast<double>(trace.agents().size()));
  for (const auto& [key, value] : trace.agent_config) in.push_back(signed_log1p(value));

  // Per-step block means of signed-log raw features, pooled over steps.
  const std::size_t n = features.raw.size();
  static constexpr std::array<std::pair<std::size_t, std::size_t>, 4> blocks{
      {{0, 4}, {4, 7}, {7, 10}, {10, 13}}};
  for (const auto& [lo, hi] : blocks) {
    std::vector<double> per_step(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto v = features.raw[j].flat();
      double acc = 0.0;
      for (std::size_t k = lo; k < hi; ++k) acc += signed_log1p(v[k]);
      per_step[j] = acc / static_cast<double>(hi - lo);
    }
    double mean = 0.0;
    double max = 0.0;
    double tail = 0.0;
    if (n > 0) {
      for (double x : per_step) mean += x;
      mean /= static_cast<double>(n);
      max = *std::max_element(per_step.begin(), per_step.end());
      const std::size_t start = n - std::max<std::size_t>(1, n / 4);
      for (std::size_t j = start; j < n; ++j) tail += per_step[j];
      tail /= static_cast<double>(n - start);
    }
    in.insert(in.end(), {mean, max, tail});
  }
  return in;
}

Eigen::MatrixXd DeterministicContextEncoder::projection(std::size_t input_dim) const {
  const auto rows = static_cast<Eigen::Index>(std::max(dim_, input_dim));
  const auto cols = static_cast<Eigen::Index>(std::min(dim_, input_dim));
  std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (input_dim + 1)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  if (input_dim >= dim_) return q.transpose();
  return q;
}

ContextVector DeterministicContextEncoder::encode(const ExecutionTrace& trace, const FeatureSet& features) const {
  const auto in = pooled_input(trace, features);
  const Eigen::Map<const Eigen::VectorXd> x(in.data(), static_cast<Eigen::Index>(in.size()));
  const Eigen::VectorXd y = projection(in.size()) * x;
  ContextVector cv;
  cv.values.assign(y.data(), y.data() + y.size());
  return cv;
}

ContextVector encode_context(const ExecutionTrace& trace, const FeatureSet& features) {
  return DeterministicContextEncoder().encode(trace, features);
}

}  // namespace masattr
