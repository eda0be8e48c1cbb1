#include "masattr/cdc_mas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "masattr/errors.hpp"
#include "masattr/stats.hpp"

namespace masattr {

bool CausalSkeleton::adjacent(std::size_t a, std::size_t b) const {
  const auto key = std::minmax(a, b);
  return std::binary_search(adjacencies.begin(), adjacencies.end(), std::make_pair(key.first, key.second));
}

std::size_t CausalSkeleton::skipped_tests() const {
  return static_cast<std::size_t>(
      std::count_if(ci_log.begin(), ci_log.end(), [](const CiRecord& r) { return r.skipped; }));
}

namespace {

// Calls fn on each size-k subset of `items` in lexicographic order; stops when fn returns true.
template <typename Fn>
bool for_each_subset(const std::vector<std::size_t>& items, std::size_t k, Fn fn) {
  if (k > items.size()) return false;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::size_t> subset(k);
  while (true) {
    for (std::size_t a = 0; a < k; ++a) subset[a] = items[idx[a]];
    if (fn(subset)) return true;
    std::size_t a = k;
    while (a > 0 && idx[a - 1] == items.size() - k + (a - 1)) --a;
    if (a == 0) return false;
    ++idx[a - 1];
    for (std::size_t b = a; b < k; ++b) idx[b] = idx[b - 1] + 1;
  }
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double bk = k < b.size() ? b[k] : 0.0;
    dot += a[k] * bk;
    na += a[k] * a[k];
    nb += bk * bk;
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

CausalSkeleton discover_skeleton(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& context,
                                 const SkeletonOptions& options) {
  const auto n_rows = static_cast<std::size_t>(samples.rows());
  const auto p = static_cast<std::size_t>(samples.cols());
  if (n_rows < options.min_samples) {
    throw StageError("insufficient samples for skeleton discovery: " + std::to_string(n_rows) + " < " +
                     std::to_string(options.min_samples));
  }
  Eigen::MatrixXd basis(samples.rows(), 0);
  if (options.use_context && context.cols() > 0) {
    if (context.rows() != samples.rows()) throw std::invalid_argument("context rows must match sample rows");
    basis = centered_span_basis(context);
  }
  const Eigen::MatrixXd cov = residual_covariance(samples, basis);

  CausalSkeleton sk;
  sk.variables = p;
  sk.context_rank = static_cast<std::size_t>(basis.cols());
  std::vector<std::vector<char>> adj(p, std::vector<char>(p, 1));
  for (std::size_t v = 0; v < p; ++v) adj[v][v] = 0;

  for (std::size_t level = 0; level <= options.max_cond; ++level) {
    const auto snapshot = adj;
    bool testable = false;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>>> removals;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = i + 1; j < p; ++j) {
        if (!snapshot[i][j]) continue;
        std::vector<std::size_t> cand;
        for (std::size_t k = 0; k < j; ++k) {
          if (k != i && (snapshot[i][k] || snapshot[j][k])) cand.push_back(k);
        }
        if (cand.size() < level) continue;
        testable = true;
        const double dof = static_cast<double>(n_rows) - static_cast<double>(level + sk.context_rank) - 3.0;
        for_each_subset(cand, level, [&](const std::vector<std::size_t>& s) {
          CiRecord rec{i, j, s, 0.0, 1.0, false, false};
          const auto r = partial_correlation(cov, i, j, s);
          if (!r || dof <= 0) {
            rec.skipped = true;
            sk.ci_log.push_back(std::move(rec));
            return false;
          }
          rec.p_value = fisher_z_pvalue(*r, dof, &rec.statistic);
          rec.removed = rec.p_value > options.alpha_sig;
          sk.ci_log.push_back(rec);
          if (rec.removed) removals.push_back({{i, j}, s});
          return rec.removed;
        });
      }
    }
    for (const auto& [pair, sep] : removals) {
      adj[pair.first][pair.second] = adj[pair.second][pair.first] = 0;
      sk.sepsets[pair] = sep;
    }
    if (!testable) break;
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) {
      if (adj[i][j]) sk.adjacencies.emplace_back(i, j);
    }
  }
  return sk;
}

std::string to_string(OrientationReason r) {
  switch (r) {
    case OrientationReason::Temporal:
      return "temporal";
    case OrientationReason::Collider:
      return "collider";
    case OrientationReason::ContextFallback:
      return "context-fallback";
  }
  return "unknown";
}

OrientedGraph orient_edges(const CausalSkeleton& skeleton, const std::vector<double>& times,
                           const std::vector<double>& context, const std::vector<std::vector<double>>& features) {
  const std::size_t p = skeleton.variables;
  if (times.size() != p) throw std::invalid_argument("one time per variable required");
  std::vector<double> affinity(p, 0.0);
  for (std::size_t v = 0; v < p && v < features.size(); ++v) affinity[v] = cosine(features[v], context);
  // Total order: time, then higher context affinity, then index.
  auto before = [&](std::size_t a, std::size_t b) {
    if (times[a] != times[b]) return times[a] < times[b];
    if (affinity[a] != affinity[b]) return affinity[a] > affinity[b];
    return a < b;
  };

  std::vector<NodeInfo> nodes;
  for (std::size_t v = 0; v < p; ++v) nodes.push_back({v, "", times[v]});
  OrientedGraph out{DiGraph(nodes), {}, {}};
  for (const auto& [a, b] : skeleton.adjacencies) {
    const Edge e = before(a, b) ? Edge{a, b} : Edge{b, a};
    out.graph.add_edge(e.from, e.to);
    out.reasons[e] = times[a] == times[b] ? OrientationReason::ContextFallback : OrientationReason::Temporal;
  }

  // Unshielded colliders i - k - j with k outside sepset(i, j).
  std::vector<std::vector<std::size_t>> nbrs(p);
  for (const auto& [a, b] : skeleton.adjacencies) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  for (std::size_t k = 0; k < p; ++k) {
    auto& nk = nbrs[k];
    std::sort(nk.begin(), nk.end());
    for (std::size_t x = 0; x < nk.size(); ++x) {
      for (std::size_t y = x + 1; y < nk.size(); ++y) {
        const auto i = nk[x];
        const auto j = nk[y];
        if (skeleton.adjacent(i, j)) continue;
        const auto sep = skeleton.sepsets.find({i, j});
        if (sep == skeleton.sepsets.end()) continue;
        if (std::find(sep->second.begin(), sep->second.end(), k) != sep->second.end()) continue;
        for (auto u : {i, j}) {
          if (out.graph.has_edge(u, k)) {
            out.reasons[Edge{u, k}] = OrientationReason::Collider;
          } else {
            std::ostringstream os;
            os << "collider " << i << "->" << k << "<-" << j << " contradicts order on edge " << k << "->" << u
               << "; kept " << k << "->" << u;
            out.conflicts.push_back(os.str());
          }
        }
      }
    }
  }
  return out;
}

bool AceScores::any_truncated() const { return std::any_of(truncated.begin(), truncated.end(), [](bool t) { return t; }); }

double context_weight(const std::vector<double>& edge_features, const std::vector<double>& context, double epsilon) {
  return epsilon + (1.0 - epsilon) * (1.0 + cosine(edge_features, context)) / 2.0;
}

AceScores ace_from_effects(const DiGraph& graph, std::size_t outcome, const std::map<Edge, double>& local_effect,
                           const std::map<Edge, double>& context_weight, std::size_t path_cap) {
  const std::size_t p = graph.size();
  if (outcome >= p) throw std::invalid_argument("outcome variable out of range");
  const auto order = graph.topological_order();
  if (!order) throw std::invalid_argument("ACE needs an acyclic graph");

  AceScores s;
  s.outcome = outcome;
  s.local_effect = local_effect;
  s.context_weight = context_weight;
  s.ace.assign(p, 0.0);
  s.path_count.assign(p, 0);
  s.truncated.assign(p, false);

  std::vector<std::vector<std::size_t>> kids(p);
  std::vector<std::vector<double>> factor(p);
  for (std::size_t v = 0; v < p; ++v) {
    kids[v] = graph.children(v);
    std::stable_sort(kids[v].begin(), kids[v].end(), [&](std::size_t a, std::size_t b) {
      return std::abs(local_effect.at({v, a})) > std::abs(local_effect.at({v, b}));
    });
    for (auto c : kids[v]) factor[v].push_back(local_effect.at({v, c}) / context_weight.at({v, c}));
  }

  // Path counts (capped) and exact path sums by dynamic programming in reverse topological order.
  const double cap = static_cast<double>(path_cap);
  std::vector<double> count(p, 0.0);
  std::vector<double> sum(p, 0.0);
  count[outcome] = 1.0;
  sum[outcome] = 1.0;
  for (auto it = order->rbegin(); it != order->rend(); ++it) {
    const auto v = *it;
    if (v == outcome) continue;
    for (std::size_t c = 0; c < kids[v].size(); ++c) {
      count[v] = std::min(cap + 1.0, count[v] + count[kids[v][c]]);
      sum[v] += factor[v][c] * sum[kids[v][c]];
    }
  }

  for (std::size_t i = 0; i < p; ++i) {
    if (i == outcome || count[i] == 0.0) continue;
    if (count[i] <= cap) {
      s.ace[i] = sum[i];
      s.path_count[i] = static_cast<std::size_t>(count[i]);
      continue;
    }
    // Too many paths: enumerate depth-first, strongest effects first, until the cap.
    s.truncated[i] = true;
    double total = 0.0;
    std::size_t paths = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{i, 0}};
    std::vector<double> prod{1.0};
    while (!stack.empty() && paths < path_cap) {
      auto& [v, next] = stack.back();
      if (v == outcome) {
        total += prod.back();
        ++paths;
        stack.pop_back();
        prod.pop_back();
        continue;
      }
      if (next < kids[v].size()) {
        const auto c = next++;
        if (count[kids[v][c]] == 0.0) continue;
        const double f = prod.back() * factor[v][c];
        stack.emplace_back(kids[v][c], 0);
        prod.push_back(f);
      } else {
        stack.pop_back();
        prod.pop_back();
      }
    }
    s.ace[i] = total;
    s.path_count[i] = paths;
  }
  return s;
}

AceScores compute_ace(const OrientedGraph& graph, const Eigen::MatrixXd& samples, std::size_t outcome,
                      const std::vector<std::vector<double>>& features, const std::vector<double>& context,
                      const AceOptions& options) {
  const auto& g = graph.graph;
  if (static_cast<std::size_t>(samples.cols()) != g.size()) {
    throw std::invalid_argument("samples must have one column per variable");
  }
  std::map<Edge, double> effects;
  std::map<Edge, double> weights;
  for (std::size_t v = 0; v < g.size(); ++v) {
    const auto parents = g.parents(v);
    if (parents.empty()) continue;
    Eigen::MatrixXd x(samples.rows(), static_cast<Eigen::Index>(parents.size()));
    for (std::size_t k = 0; k < parents.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = samples.col(static_cast<Eigen::Index>(parents[k]));
    }
    const Eigen::VectorXd beta = ols_with_intercept(x, samples.col(static_cast<Eigen::Index>(v)));
    for (std::size_t k = 0; k < parents.size(); ++k) {
      const Edge e{parents[k], v};
      effects[e] = beta(static_cast<Eigen::Index>(k + 1));
      std::vector<double> ef;
      if (parents[k] < features.size()) ef = features[parents[k]];
      if (v < features.size()) ef.insert(ef.end(), features[v].begin(), features[v].end());
      weights[e] = context_weight(ef, context, options.epsilon);
    }
  }
  return ace_from_effects(g, outcome, effects, weights, options.path_cap);
}

std::vector<std::size_t> rank_by_ace(const AceScores& scores) {
  std::vector<std::size_t> steps;
  for (std::size_t i = 0; i < scores.ace.size(); ++i) {
    if (i != scores.outcome) steps.push_back(i);
  }
  std::stable_sort(steps.begin(), steps.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(scores.ace[a]) > std::abs(scores.ace[b]); });
  return steps;
}

nlohmann::json to_json(const CausalSkeleton& skeleton) {
  using nlohmann::json;
  json adj = json::array();
  for (const auto& [a, b] : skeleton.adjacencies) adj.push_back({a, b});
  json sep = json::array();
  for (const auto& [pair, s] : skeleton.sepsets) sep.push_back({{"pair", {pair.first, pair.second}}, {"sepset", s}});
  json log = json::array();
  for (const auto& r : skeleton.ci_log) {
    json rec = {{"pair", {r.i, r.j}}, {"cond", r.cond}, {"removed", r.removed}, {"skipped", r.skipped}};
    if (!r.skipped) {
      rec["statistic"] = r.statistic;
      rec["p_value"] = r.p_value;
    }
    log.push_back(std::move(rec));
  }
  return {{"variables", skeleton.variables},
          {"context_rank", skeleton.context_rank},
          {"adjacencies", adj},
          {"sepsets", sep},
          {"ci_log", log}};
}

nlohmann::json to_json(const OrientedGraph& graph) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.graph.edges()) {
    edges.push_back({{"from", e.from}, {"to", e.to}, {"reason", to_string(graph.reasons.at(e))}});
  }
  return {{"edges", edges}, {"conflicts", graph.conflicts}};
}

nlohmann::json to_json(const AceScores& scores) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [e, le] : scores.local_effect) {
    edges.push_back({{"from", e.from}, {"to", e.to}, {"local_effect", le}, {"context_weight", scores.context_weight.at(e)}});
  }
  return {{"outcome", scores.outcome},
          {"ace", scores.ace},
          {"path_count", scores.path_count},
          {"truncated", scores.truncated},
          {"edges", edges}};
}

}  // namespace masattr
