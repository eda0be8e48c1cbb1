#include "masattr/scm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "masattr/errors.hpp"
#include "masattr/stats.hpp"

namespace masattr {

double Mechanism::amplification() const { return std::exp(amplification_alpha * shapley_value); }

double Mechanism::base(std::span<const double> values) const {
  double acc = intercept;
  for (std::size_t k = 0; k < parents.size(); ++k) acc += parent_weights[k] * values[parents[k]];
  return acc;
}

StructuralModel::StructuralModel(DiGraph graph, std::vector<Mechanism> mechanisms, OutcomeReadout readout)
    : graph_(std::move(graph)), mechanisms_(std::move(mechanisms)), readout_(std::move(readout)) {
  if (mechanisms_.size() != graph_.size()) {
    throw std::invalid_argument("structural model needs exactly one mechanism per node");
  }
  auto order = graph_.topological_order();
  if (!order) throw std::invalid_argument("structural model graph must be acyclic");
  order_ = std::move(*order);
  for (std::size_t j = 0; j < mechanisms_.size(); ++j) {
    const auto& mech = mechanisms_[j];
    if (mech.node != j) throw std::invalid_argument("mechanism node ids must match positions");
    if (mech.parents != graph_.parents(j)) {
      throw std::invalid_argument("mechanism parents differ from graph parents at node " + std::to_string(j));
    }
    if (mech.parent_weights.size() != mech.parents.size()) {
      throw std::invalid_argument("one weight per parent required at node " + std::to_string(j));
    }
    if (!(mech.noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be >= 0");
  }
  if (readout_.nodes.size() != readout_.weights.size()) {
    throw std::invalid_argument("readout needs one weight per node");
  }
  for (auto v : readout_.nodes) {
    if (v >= graph_.size()) throw std::invalid_argument("readout node out of range");
  }
}

void StructuralModel::set_alpha(double alpha) {
  for (auto& m : mechanisms_) m.amplification_alpha = alpha;
}

void StructuralModel::set_shapley_values(std::span<const double> per_node) {
  if (per_node.size() != mechanisms_.size()) throw std::invalid_argument("one Shapley value per node");
  for (std::size_t j = 0; j < mechanisms_.size(); ++j) mechanisms_[j].shapley_value = per_node[j];
}

double StructuralModel::readout_value(std::span<const double> values) const {
  double y = readout_.intercept;
  for (std::size_t k = 0; k < readout_.nodes.size(); ++k) y += readout_.weights[k] * values[readout_.nodes[k]];
  return y;
}

OutcomeReadout mean_sink_readout(const DiGraph& graph) {
  OutcomeReadout r;
  r.nodes = graph.sinks();
  r.weights.assign(r.nodes.size(), r.nodes.empty() ? 0.0 : 1.0 / static_cast<double>(r.nodes.size()));
  return r;
}

namespace {

Realization evaluate(const StructuralModel& m, const InterventionSpec* spec, const NoiseVector& noise) {
  if (noise.nodes.size() != m.size()) throw std::invalid_argument("noise vector size mismatch");
  Realization r;
  r.values.assign(m.size(), 0.0);
  for (auto j : m.order()) {
    if (spec) {
      const auto it = spec->assignments.find(j);
      if (it != spec->assignments.end()) {
        r.values[j] = it->second;
        continue;
      }
    }
    double nj = noise.nodes[j];
    if (spec) {
      const auto it = spec->noise.find(j);
      if (it != spec->noise.end()) nj = it->second;
    }
    const auto& mech = m.mechanisms()[j];
    r.values[j] = (mech.base(r.values) + nj) * mech.amplification();
  }
  r.outcome = std::clamp(m.readout_value(r.values) + noise.outcome, 0.0, 1.0);
  return r;
}

void check_spec(const StructuralModel& m, const InterventionSpec& spec) {
  for (const auto* part : {&spec.assignments, &spec.noise}) {
    for (const auto& [node, value] : *part) {
      if (node >= m.size()) throw std::invalid_argument("intervention on unknown node " + std::to_string(node));
    }
  }
}

}  // namespace

Realization simulate(const StructuralModel& m, const NoiseVector& noise) { return evaluate(m, nullptr, noise); }

NoiseVector sample_noise(const StructuralModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NoiseVector noise;
  noise.nodes.resize(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) noise.nodes[j] = m.mechanisms()[j].noise_scale * normal(rng);
  return noise;
}

Realization simulate(const StructuralModel& m, std::uint64_t seed) { return simulate(m, sample_noise(m, seed)); }

Realization do_intervene(const StructuralModel& m, const InterventionSpec& spec, const NoiseVector& noise) {
  check_spec(m, spec);
  return evaluate(m, &spec, noise);
}

Realization do_intervene(const StructuralModel& m, const InterventionSpec& spec, std::uint64_t seed) {
  return do_intervene(m, spec, sample_noise(m, seed));
}

NoiseVector abduct(const StructuralModel& m, std::span<const double> observed,
                   std::optional<double> observed_outcome) {
  if (observed.size() != m.size()) throw std::invalid_argument("observation must cover every node");
  NoiseVector noise;
  noise.nodes.resize(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    const auto& mech = m.mechanisms()[j];
    noise.nodes[j] = observed[j] / mech.amplification() - mech.base(observed);
  }
  noise.outcome = observed_outcome ? *observed_outcome - m.readout_value(observed) : 0.0;
  return noise;
}

Realization counterfactual(const StructuralModel& m, std::span<const double> observed,
                           std::optional<double> observed_outcome, const InterventionSpec& spec) {
  return do_intervene(m, spec, abduct(m, observed, observed_outcome));
}

double counterfactual_outcome(const StructuralModel& m, std::span<const double> observed,
                              std::optional<double> observed_outcome, const InterventionSpec& spec) {
  return counterfactual(m, observed, observed_outcome, spec).outcome;
}

CounterfactualWorld::CounterfactualWorld(const StructuralModel& model, std::vector<double> observed,
                                         double observed_outcome)
    : model_(&model),
      observed_(std::move(observed)),
      observed_outcome_(observed_outcome),
      noise_(abduct(model, observed_, observed_outcome)) {}

double CounterfactualWorld::outcome(const InterventionSpec& spec) const {
  if (spec.empty()) return observed_outcome_;
  return realize(spec).outcome;
}

Realization CounterfactualWorld::realize(const InterventionSpec& spec) const {
  return do_intervene(*model_, spec, noise_);
}

StructuralModel fit_mechanisms(const Eigen::MatrixXd& values, const DiGraph& graph, const FitOptions& options,
                               FitReport* report) {
  const auto n = static_cast<std::size_t>(values.rows());
  if (static_cast<std::size_t>(values.cols()) != graph.size()) {
    throw InputError("corpus topology mismatch: " + std::to_string(values.cols()) + " columns for " +
                     std::to_string(graph.size()) + " nodes");
  }
  std::size_t max_parents = 0;
  for (std::size_t j = 0; j < graph.size(); ++j) max_parents = std::max(max_parents, graph.parents(j).size());
  const std::size_t needed = std::max(options.min_samples, 3 * max_parents);
  if (n < needed) {
    throw InputError("corpus too small: " + std::to_string(n) + " samples, need " + std::to_string(needed));
  }
  FitReport local;
  local.samples = n;
  std::vector<Mechanism> mechs(graph.size());
  for (std::size_t j = 0; j < graph.size(); ++j) {
    auto& mech = mechs[j];
    mech.node = j;
    mech.parents = graph.parents(j);
    mech.amplification_alpha = options.alpha;
    const auto p = mech.parents.size();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < p; ++k) {
      X.col(static_cast<Eigen::Index>(k)) = values.col(static_cast<Eigen::Index>(mech.parents[k]));
    }
    const Eigen::VectorXd y = values.col(static_cast<Eigen::Index>(j));
    const Eigen::VectorXd beta = ols_with_intercept(X, y, options.ridge, &mech.rank_deficient);
    if (mech.rank_deficient) local.rank_deficient_nodes.push_back(j);
    mech.intercept = beta(0);
    for (std::size_t k = 0; k < p; ++k) mech.parent_weights.push_back(beta(static_cast<Eigen::Index>(k + 1)));
    Eigen::VectorXd resid = y.array() - beta(0);
    if (p > 0) resid -= X * beta.tail(static_cast<Eigen::Index>(p));
    const double dof = n > p + 1 ? static_cast<double>(n - p - 1) : static_cast<double>(n);
    mech.noise_scale = std::sqrt(resid.squaredNorm() / dof);
  }
  if (report) *report = std::move(local);
  return StructuralModel(graph, std::move(mechs), mean_sink_readout(graph));
}

StructuralModel fit_mechanisms(const std::vector<ExecutionTrace>& corpus, const DiGraph& graph,
                               const FitOptions& options, FitReport* report) {
  Eigen::MatrixXd values(static_cast<Eigen::Index>(corpus.size()), static_cast<Eigen::Index>(graph.size()));
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto& t = corpus[r];
    if (t.steps.size() != graph.size()) {
      throw InputError("corpus trace " + std::to_string(r) + " has " + std::to_string(t.steps.size()) +
                       " steps, expected " + std::to_string(graph.size()));
    }
    for (std::size_t j = 0; j < graph.size(); ++j) {
      if (!t.steps[j].performance) {
        throw InputError("corpus trace " + std::to_string(r) + " lacks performance at step " + std::to_string(j));
      }
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = *t.steps[j].performance;
    }
  }
  return fit_mechanisms(values, graph, options, report);
}

StructuralModel prior_model(const DiGraph& graph, double alpha, double root_level) {
  std::vector<Mechanism> mechs(graph.size());
  for (std::size_t j = 0; j < graph.size(); ++j) {
    auto& mech = mechs[j];
    mech.node = j;
    mech.parents = graph.parents(j);
    mech.parent_weights.assign(mech.parents.size(),
                               mech.parents.empty() ? 0.0 : 1.0 / static_cast<double>(mech.parents.size()));
    if (mech.parents.empty()) mech.intercept = root_level;
    mech.amplification_alpha = alpha;
  }
  return StructuralModel(graph, std::move(mechs), mean_sink_readout(graph));
}

nlohmann::json to_json(const StructuralModel& m) {
  using nlohmann::json;
  json doc;
  doc["schema"] = kModelSchema;
  json nodes = json::array();
  for (const auto& n : m.graph().nodes()) nodes.push_back({{"step", n.step}, {"agent", n.agent}, {"t", n.timestamp}});
  doc["nodes"] = nodes;
  json edges = json::array();
  for (const auto& e : m.graph().edges()) edges.push_back({e.from, e.to});
  doc["edges"] = edges;
  json mechs = json::array();
  for (const auto& mech : m.mechanisms()) {
    mechs.push_back({{"node", mech.node},
                     {"parents", mech.parents},
                     {"weights", mech.parent_weights},
                     {"intercept", mech.intercept},
                     {"noise_scale", mech.noise_scale},
                     {"alpha", mech.amplification_alpha},
                     {"shapley", mech.shapley_value},
                     {"rank_deficient", mech.rank_deficient}});
  }
  doc["mechanisms"] = mechs;
  doc["readout"] = {{"nodes", m.readout().nodes},
                    {"weights", m.readout().weights},
                    {"intercept", m.readout().intercept}};
  return doc;
}

StructuralModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kModelSchema) {
      throw InputError("unsupported model schema: " + doc.at("schema").get<std::string>());
    }
    std::vector<NodeInfo> nodes;
    for (const auto& n : doc.at("nodes")) {
      nodes.push_back({n.at("step").get<std::size_t>(), n.at("agent").get<std::string>(), n.at("t").get<double>()});
    }
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    std::vector<Mechanism> mechs;
    for (const auto& j : doc.at("mechanisms")) {
      Mechanism mech;
      mech.node = j.at("node").get<std::size_t>();
      mech.parents = j.at("parents").get<std::vector<std::size_t>>();
      mech.parent_weights = j.at("weights").get<std::vector<double>>();
      mech.intercept = j.at("intercept").get<double>();
      mech.noise_scale = j.at("noise_scale").get<double>();
      mech.amplification_alpha = j.at("alpha").get<double>();
      mech.shapley_value = j.value("shapley", 0.0);
      mech.rank_deficient = j.value("rank_deficient", false);
      mechs.push_back(std::move(mech));
    }
    OutcomeReadout r;
    r.nodes = doc.at("readout").at("nodes").get<std::vector<std::size_t>>();
    r.weights = doc.at("readout").at("weights").get<std::vector<double>>();
    r.intercept = doc.at("readout").value("intercept", 0.0);
    return StructuralModel(DiGraph(std::move(nodes), std::move(edges)), std::move(mechs), std::move(r));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("inconsistent model document: ") + e.what());
  }
}

}  // namespace masattr
