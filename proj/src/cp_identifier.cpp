#include "masattr/cp_identifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace masattr {

double step_intervention_delta(const CounterfactualWorld& world, std::size_t k, double x_optimal) {
  return step_intervention_delta(world, k, NodeRepair{false, x_optimal});
}

double step_intervention_delta(const CounterfactualWorld& world, std::size_t k, const NodeRepair& repair) {
  InterventionSpec spec;
  repair.apply(spec, k);
  return world.outcome(spec) - world.observed_outcome();
}

double step_intervention_delta(const StructuralModel& model, const std::vector<double>& observed,
                               double observed_outcome, std::size_t k, double x_optimal) {
  return step_intervention_delta(CounterfactualWorld(model, observed, observed_outcome), k, x_optimal);
}

std::vector<std::size_t> moving_block_indices(std::size_t n, std::size_t block, std::mt19937_64& rng) {
  if (n == 0) return {};
  block = std::clamp<std::size_t>(block, 1, n);
  std::uniform_int_distribution<std::size_t> start(0, n - block);
  std::vector<std::size_t> rows;
  rows.reserve(n + block);
  while (rows.size() < n) {
    const auto s = start(rng);
    for (std::size_t k = 0; k < block; ++k) rows.push_back(s + k);
  }
  rows.resize(n);
  return rows;
}

BootstrapResult bootstrap_confidence(const ReplayFn& replay, std::size_t rows, std::size_t steps,
                                     const BootstrapOptions& options) {
  if (options.replicates < kMinReplicates) {
    throw std::invalid_argument("bootstrap needs at least " + std::to_string(kMinReplicates) + " replicates");
  }
  BootstrapResult out;
  out.replicates = options.replicates;
  std::vector<std::size_t> hits(steps, 0);
  for (std::size_t b = 0; b < options.replicates; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    const auto sample = moving_block_indices(rows, options.block, rng);
    try {
      const auto ranking = replay(sample);
      for (std::size_t r = 0; r < std::min(options.k_top, ranking.size()); ++r) {
        if (ranking[r] < steps) ++hits[ranking[r]];
      }
    } catch (const std::exception& e) {
      ++out.failures;
      out.log.push_back("replicate " + std::to_string(b) + ": " + e.what());
    }
  }
  out.confidence.resize(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    out.confidence[k] = static_cast<double>(hits[k]) / static_cast<double>(options.replicates);
  }
  return out;
}

FinalScoreWeights FinalScoreWeights::normalized() const {
  if (ace < 0 || delta < 0 || confidence < 0) throw std::invalid_argument("final-score weights must be nonnegative");
  const double total = ace + delta + confidence;
  if (!(total > 0)) throw std::invalid_argument("final-score weights must not all be zero");
  return {ace / total, delta / total, confidence / total};
}

std::vector<double> min_max_normalize(const std::vector<double>& v) {
  if (v.empty()) return {};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  std::vector<double> out(v.size(), 0.5);
  if (range > 0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  }
  return out;
}

StepRanking final_rank(const std::vector<double>& ace, const std::vector<double>& deltas,
                       const std::vector<double>& confidences, const FinalScoreWeights& weights) {
  const std::size_t n = ace.size();
  if (deltas.size() != n || confidences.size() != n) {
    throw std::invalid_argument("ACE, delta and confidence must cover the same steps");
  }
  if (n == 0) throw std::invalid_argument("final ranking needs at least one step");
  StepRanking out;
  out.weights = weights.normalized();
  std::vector<double> abs_ace(n);
  std::transform(ace.begin(), ace.end(), abs_ace.begin(), [](double a) { return std::abs(a); });
  const auto ace_n = min_max_normalize(abs_ace);
  const auto delta_n = min_max_normalize(deltas);
  for (std::size_t k = 0; k < n; ++k) {
    StepScore s;
    s.step = k;
    s.ace = ace[k];
    s.delta = deltas[k];
    s.confidence = confidences[k];
    s.ace_norm = ace_n[k];
    s.delta_norm = delta_n[k];
    s.final_score = out.weights.ace * s.ace_norm + out.weights.delta * s.delta_norm +
                    out.weights.confidence * s.confidence;
    out.records.push_back(s);
  }
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    return out.records[a].final_score > out.records[b].final_score;
  });
  out.predicted_step = out.records[out.order.front()].step;
  return out;
}

nlohmann::json to_json(const StepRanking& ranking) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : ranking.records) {
    steps.push_back({{"step", s.step},
                     {"ace", s.ace},
                     {"delta", s.delta},
                     {"confidence", s.confidence},
                     {"ace_norm", s.ace_norm},
                     {"delta_norm", s.delta_norm},
                     {"final_score", s.final_score}});
  }
  nlohmann::json order = nlohmann::json::array();
  for (auto i : ranking.order) order.push_back(ranking.records[i].step);
  return {{"weights", {{"ace", ranking.weights.ace}, {"delta", ranking.weights.delta}, {"confidence", ranking.weights.confidence}}},
          {"steps", steps},
          {"order", order},
          {"predicted_step", ranking.predicted_step}};
}

}  // namespace masattr
