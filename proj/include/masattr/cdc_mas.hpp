#pragma once

// Context-conditioned causal discovery over per-step variables: PC-style skeleton search
// restricted to forward-in-time pairs, temporal/collider orientation, and path-product
// average causal effects toward an outcome variable.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "masattr/graph.hpp"

namespace masattr {

struct CiRecord {
  std::size_t i = 0;
  std::size_t j = 0;
  std::vector<std::size_t> cond;
  double statistic = 0.0;
  double p_value = 1.0;
  bool removed = false;
  bool skipped = false;
};

struct CausalSkeleton {
  std::size_t variables = 0;
  // Pairs (i, j) with i < j, sorted.
  std::vector<std::pair<std::size_t, std::size_t>> adjacencies;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> sepsets;
  std::vector<CiRecord> ci_log;
  std::size_t context_rank = 0;

  bool adjacent(std::size_t a, std::size_t b) const;
  std::size_t skipped_tests() const;
};

struct SkeletonOptions {
  double alpha_sig = 0.01;
  std::size_t max_cond = 3;
  bool use_context = true;
  std::size_t min_samples = 30;
};

// Columns of `samples` are variables in temporal order; rows are samples. `context` holds one
// context vector per sample row (may have zero columns).
CausalSkeleton discover_skeleton(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& context,
                                 const SkeletonOptions& options);

enum class OrientationReason { Temporal, Collider, ContextFallback };
std::string to_string(OrientationReason r);

struct OrientedGraph {
  DiGraph graph;
  std::map<Edge, OrientationReason> reasons;
  // Collider orientations overruled by temporal order.
  std::vector<std::string> conflicts;
};

// `times` orders variables; ties are ordered by cosine between the variable's feature vector and
// the context (higher first), then by index. Empty feature rows count as zero vectors.
OrientedGraph orient_edges(const CausalSkeleton& skeleton, const std::vector<double>& times,
                           const std::vector<double>& context,
                           const std::vector<std::vector<double>>& features = {});

struct AceOptions {
  double epsilon = 0.1;
  std::size_t path_cap = 10000;
};

struct AceScores {
  std::vector<double> ace;
  std::map<Edge, double> local_effect;
  std::map<Edge, double> context_weight;
  std::vector<std::size_t> path_count;
  std::vector<bool> truncated;
  std::size_t outcome = 0;

  bool any_truncated() const;
};

// eps + (1 - eps) * (1 + cos(a, b)) / 2 with b zero-padded or truncated to a's length; cos of a zero vector is 0.
double context_weight(const std::vector<double>& edge_features, const std::vector<double>& context, double epsilon);

// ACE_i = sum over directed paths i -> outcome of prod(local effect) / prod(context weight).
AceScores ace_from_effects(const DiGraph& graph, std::size_t outcome, const std::map<Edge, double>& local_effect,
                           const std::map<Edge, double>& context_weight, std::size_t path_cap);

// Local effects by OLS of each node on all its parents over `samples`; context weights from the
// concatenated endpoint features.
AceScores compute_ace(const OrientedGraph& graph, const Eigen::MatrixXd& samples, std::size_t outcome,
                      const std::vector<std::vector<double>>& features, const std::vector<double>& context,
                      const AceOptions& options);

// Steps (every variable except the outcome) by descending |ACE|, ties by index.
std::vector<std::size_t> rank_by_ace(const AceScores& scores);

nlohmann::json to_json(const CausalSkeleton& skeleton);
nlohmann::json to_json(const OrientedGraph& graph);
nlohmann::json to_json(const AceScores& scores);

}  // namespace masattr
