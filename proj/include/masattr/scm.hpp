#pragma once

// Linear structural causal model with Shapley amplification:
//   x_j = (intercept_j + sum_p w_pj * x_p + n_j) * exp(alpha * phi_j)
//   Y   = clamp(readout_intercept + sum_s r_s * x_s + n_Y, 0, 1)
// Supports seeded simulation, do-interventions and abduction-action-prediction counterfactuals.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "masattr/graph.hpp"
#include "masattr/trace.hpp"

namespace masattr {

struct Mechanism {
  std::size_t node = 0;
  std::vector<std::size_t> parents;
  std::vector<double> parent_weights;
  double intercept = 0.0;
  double noise_scale = 0.0;
  double amplification_alpha = 0.5;
  double shapley_value = 0.0;
  bool rank_deficient = false;

  double amplification() const;
  double base(std::span<const double> values) const;
};

struct OutcomeReadout {
  std::vector<std::size_t> nodes;
  std::vector<double> weights;
  double intercept = 0.0;
};

struct NoiseVector {
  std::vector<double> nodes;
  double outcome = 0.0;
};

struct Realization {
  std::vector<double> values;
  double outcome = 0.0;
};

struct InterventionSpec {
  // Hard interventions: do(x_j = value).
  std::map<std::size_t, double> assignments;
  // Soft interventions: the node keeps its mechanism but its noise term is replaced.
  std::map<std::size_t, double> noise;

  bool empty() const { return assignments.empty() && noise.empty(); }
};

// What "this node performs normally" means in a counterfactual.
struct NodeRepair {
  // Nominal: the node keeps its mechanism with the abducted noise set to zero, so it still
  // reacts to its counterfactual inputs. Otherwise the node is forced to `value`.
  bool nominal = true;
  double value = 1.0;

  void apply(InterventionSpec& spec, std::size_t node) const {
    if (nominal) {
      spec.noise[node] = 0.0;
    } else {
      spec.assignments[node] = value;
    }
  }
};

class StructuralModel {
 public:
  StructuralModel() = default;
  // Validates one mechanism per node whose parents equal the graph parents.
  StructuralModel(DiGraph graph, std::vector<Mechanism> mechanisms, OutcomeReadout readout);

  const DiGraph& graph() const { return graph_; }
  const std::vector<Mechanism>& mechanisms() const { return mechanisms_; }
  const OutcomeReadout& readout() const { return readout_; }
  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t size() const { return mechanisms_.size(); }

  void set_alpha(double alpha);
  void set_shapley_values(std::span<const double> per_node);

  // Unclamped read-out value.
  double readout_value(std::span<const double> values) const;

 private:
  DiGraph graph_;
  std::vector<Mechanism> mechanisms_;
  OutcomeReadout readout_;
  std::vector<std::size_t> order_;
};

// Mean of the sink nodes.
OutcomeReadout mean_sink_readout(const DiGraph& graph);

Realization simulate(const StructuralModel& m, const NoiseVector& noise);
// Draws n_j ~ N(0, noise_scale_j) from a generator seeded with `seed`.
Realization simulate(const StructuralModel& m, std::uint64_t seed);
NoiseVector sample_noise(const StructuralModel& m, std::uint64_t seed);

Realization do_intervene(const StructuralModel& m, const InterventionSpec& spec, const NoiseVector& noise);
Realization do_intervene(const StructuralModel& m, const InterventionSpec& spec, std::uint64_t seed);

NoiseVector abduct(const StructuralModel& m, std::span<const double> observed,
                   std::optional<double> observed_outcome);

Realization counterfactual(const StructuralModel& m, std::span<const double> observed,
                           std::optional<double> observed_outcome, const InterventionSpec& spec);
double counterfactual_outcome(const StructuralModel& m, std::span<const double> observed,
                              std::optional<double> observed_outcome, const InterventionSpec& spec);

// A fixed observation with its abducted noise, for repeated counterfactual queries.
class CounterfactualWorld {
 public:
  CounterfactualWorld(const StructuralModel& model, std::vector<double> observed, double observed_outcome);

  const StructuralModel& model() const { return *model_; }
  const std::vector<double>& observed() const { return observed_; }
  double observed_outcome() const { return observed_outcome_; }
  const NoiseVector& noise() const { return noise_; }

  double outcome(const InterventionSpec& spec) const;
  Realization realize(const InterventionSpec& spec) const;

 private:
  const StructuralModel* model_;
  std::vector<double> observed_;
  double observed_outcome_;
  NoiseVector noise_;
};

struct FitOptions {
  double alpha = 0.5;
  double ridge = 1e-6;
  std::size_t min_samples = 30;
};

struct FitReport {
  std::size_t samples = 0;
  std::vector<std::size_t> rank_deficient_nodes;
};

// Per-node OLS of the node value on its graph parents. Rows of `values` are samples.
StructuralModel fit_mechanisms(const Eigen::MatrixXd& values, const DiGraph& graph,
                               const FitOptions& options, FitReport* report = nullptr);
// Corpus form: every trace must share the graph's step count and carry per-step performance.
StructuralModel fit_mechanisms(const std::vector<ExecutionTrace>& corpus, const DiGraph& graph,
                               const FitOptions& options, FitReport* report = nullptr);

// Roots sit at `root_level`; other nodes average their parents. Zero noise. Used when no corpus is available.
StructuralModel prior_model(const DiGraph& graph, double alpha, double root_level = 1.0);

nlohmann::json to_json(const StructuralModel& m);
StructuralModel model_from_json(const nlohmann::json& doc);

inline constexpr const char* kModelSchema = "masattr.scm/1";

}  // namespace masattr
