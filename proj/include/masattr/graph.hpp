#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "masattr/trace.hpp"

namespace masattr {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  auto operator<=>(const Edge&) const = default;
};

struct NodeInfo {
  std::size_t step = 0;
  std::string agent;
  double timestamp = 0.0;
  bool operator==(const NodeInfo&) const = default;
};

// A directed graph over a fixed node set with a sorted, duplicate-free edge list.
class DiGraph {
 public:
  DiGraph() = default;
  explicit DiGraph(std::vector<NodeInfo> nodes, std::vector<Edge> edges = {});

  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeInfo>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  bool has_edge(std::size_t from, std::size_t to) const;
  void add_edge(std::size_t from, std::size_t to);
  bool remove_edge(std::size_t from, std::size_t to);

  std::vector<std::size_t> parents(std::size_t v) const;
  std::vector<std::size_t> children(std::size_t v) const;
  std::vector<std::size_t> sources() const;
  std::vector<std::size_t> sinks() const;

  // Kahn order, smallest index first among ready nodes; nullopt when cyclic.
  std::optional<std::vector<std::size_t>> topological_order() const;
  bool is_acyclic() const { return topological_order().has_value(); }

  // Nodes reachable from v (excluding v).
  std::vector<bool> descendants(std::size_t v) const;

  DiGraph reversed() const;

  bool operator==(const DiGraph&) const = default;

 private:
  std::vector<NodeInfo> nodes_;
  std::vector<Edge> edges_;
};

struct DataDependencyGraph {
  DiGraph graph;
};

struct PerformanceCausalGraph {
  DiGraph graph;
  std::vector<Edge> removed_edges;
};

std::vector<NodeInfo> trace_nodes(const ExecutionTrace& trace);

DataDependencyGraph build_data_graph(const ExecutionTrace& trace);

// Reverses every information-flow edge so each edge runs from performance cause to effect.
PerformanceCausalGraph invert(const DataDependencyGraph& g);
DataDependencyGraph invert(const PerformanceCausalGraph& g);

// Keeps the data-flow orientation as the causal graph (the no-inversion ablation).
PerformanceCausalGraph without_inversion(const DataDependencyGraph& g);

// Removes, while a cycle exists, the cycle edge whose source node has the latest timestamp.
PerformanceCausalGraph break_cycles(const DiGraph& g);

struct AgentGraph {
  std::vector<std::string> agents;
  std::vector<Edge> edges;
  std::vector<Edge> removed_edges;
  // Earliest source-step timestamp among the step edges supporting each agent edge.
  std::vector<double> contact_time;

  std::optional<std::size_t> index_of(const std::string& agent) const;
};

AgentGraph project_to_agent_graph(const PerformanceCausalGraph& g);

std::string to_dot(const DiGraph& g, const std::string& name);
std::string to_dot(const AgentGraph& g, const std::string& name);

}  // namespace masattr
