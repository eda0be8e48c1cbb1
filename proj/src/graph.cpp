#include "masattr/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace masattr {

DiGraph::DiGraph(std::vector<NodeInfo> nodes, std::vector<Edge> edges) : nodes_(std::move(nodes)) {
  for (const auto& e : edges) add_edge(e.from, e.to);
}

bool DiGraph::has_edge(std::size_t from, std::size_t to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

void DiGraph::add_edge(std::size_t from, std::size_t to) {
  if (from >= nodes_.size() || to >= nodes_.size()) throw std::out_of_range("edge endpoint out of range");
  const Edge e{from, to};
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it == edges_.end() || *it != e) edges_.insert(it, e);
}

bool DiGraph::remove_edge(std::size_t from, std::size_t to) {
  const Edge e{from, to};
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it == edges_.end() || *it != e) return false;
  edges_.erase(it);
  return true;
}

std::vector<std::size_t> DiGraph::parents(std::size_t v) const {
  std::vector<std::size_t> out;
  for (const auto& e : edges_) {
    if (e.to == v) out.push_back(e.from);
  }
  return out;
}

std::vector<std::size_t> DiGraph::children(std::size_t v) const {
  std::vector<std::size_t> out;
  const auto lo = std::lower_bound(edges_.begin(), edges_.end(), Edge{v, 0});
  for (auto it = lo; it != edges_.end() && it->from == v; ++it) out.push_back(it->to);
  return out;
}

std::vector<std::size_t> DiGraph::sources() const {
  std::vector<bool> has_in(size(), false);
  for (const auto& e : edges_) has_in[e.to] = true;
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < size(); ++v) {
    if (!has_in[v]) out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> DiGraph::sinks() const {
  std::vector<bool> has_out(size(), false);
  for (const auto& e : edges_) has_out[e.from] = true;
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < size(); ++v) {
    if (!has_out[v]) out.push_back(v);
  }
  return out;
}

std::optional<std::vector<std::size_t>> DiGraph::topological_order() const {
  std::vector<std::size_t> indeg(size(), 0);
  std::vector<std::vector<std::size_t>> out(size());
  for (const auto& e : edges_) {
    ++indeg[e.to];
    out[e.from].push_back(e.to);
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < size(); ++v) {
    if (indeg[v] == 0) ready.push(v);
  }
  std::vector<std::size_t> order;
  order.reserve(size());
  while (!ready.empty()) {
    const auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (auto w : out[v]) {
      if (--indeg[w] == 0) ready.push(w);
    }
  }
  if (order.size() != size()) return std::nullopt;
  return order;
}

std::vector<bool> DiGraph::descendants(std::size_t v) const {
  std::vector<bool> seen(size(), false);
  std::vector<std::size_t> stack = children(v);
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    if (seen[u]) continue;
    seen[u] = true;
    for (auto w : children(u)) {
      if (!seen[w]) stack.push_back(w);
    }
  }
  return seen;
}

DiGraph DiGraph::reversed() const {
  std::vector<Edge> rev;
  rev.reserve(edges_.size());
  for (const auto& e : edges_) rev.push_back({e.to, e.from});
  return DiGraph(nodes_, rev);
}

std::vector<NodeInfo> trace_nodes(const ExecutionTrace& trace) {
  std::vector<NodeInfo> nodes;
  nodes.reserve(trace.steps.size());
  for (const auto& s : trace.steps) nodes.push_back({s.index, s.agent, s.timestamp});
  return nodes;
}

DataDependencyGraph build_data_graph(const ExecutionTrace& trace) {
  DiGraph g(trace_nodes(trace));
  for (std::size_t j = 0; j < trace.steps.size(); ++j) {
    for (auto i : resolved_producers(trace, j)) g.add_edge(i, j);
  }
  return {std::move(g)};
}

PerformanceCausalGraph invert(const DataDependencyGraph& g) { return {g.graph.reversed(), {}}; }

DataDependencyGraph invert(const PerformanceCausalGraph& g) { return {g.graph.reversed()}; }

PerformanceCausalGraph without_inversion(const DataDependencyGraph& g) { return {g.graph, {}}; }

namespace {

// Edges of one directed cycle, or empty when acyclic. DFS visits nodes and children in index order.
std::vector<Edge> find_cycle(const DiGraph& g) {
  const std::size_t n = g.size();
  std::vector<int> color(n, 0);
  std::vector<std::size_t> parent(n, n);
  std::vector<std::vector<std::size_t>> kids(n);
  for (const auto& e : g.edges()) kids[e.from].push_back(e.to);
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != 0) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < kids[v].size()) {
        const auto w = kids[v][next++];
        if (color[w] == 1) {
          std::vector<Edge> cycle{{v, w}};
          for (auto u = v; u != w; u = parent[u]) cycle.push_back({parent[u], u});
          return cycle;
        }
        if (color[w] == 0) {
          color[w] = 1;
          parent[w] = v;
          stack.emplace_back(w, 0);
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

template <typename SourceTime>
std::vector<Edge> break_cycles_by(DiGraph& g, SourceTime source_time) {
  std::vector<Edge> removed;
  for (auto cycle = find_cycle(g); !cycle.empty(); cycle = find_cycle(g)) {
    const auto victim = *std::max_element(cycle.begin(), cycle.end(), [&](const Edge& a, const Edge& b) {
      const double ta = source_time(a);
      const double tb = source_time(b);
      if (ta != tb) return ta < tb;
      return a < b;
    });
    g.remove_edge(victim.from, victim.to);
    removed.push_back(victim);
  }
  return removed;
}

}  // namespace

PerformanceCausalGraph break_cycles(const DiGraph& g) {
  DiGraph out = g;
  auto removed = break_cycles_by(out, [&](const Edge& e) { return g.nodes()[e.from].timestamp; });
  return {std::move(out), std::move(removed)};
}

std::optional<std::size_t> AgentGraph::index_of(const std::string& agent) const {
  const auto it = std::find(agents.begin(), agents.end(), agent);
  if (it == agents.end()) return std::nullopt;
  return static_cast<std::size_t>(it - agents.begin());
}

AgentGraph project_to_agent_graph(const PerformanceCausalGraph& g) {
  AgentGraph out;
  std::vector<std::size_t> agent_of(g.graph.size());
  for (std::size_t v = 0; v < g.graph.size(); ++v) {
    const auto& name = g.graph.nodes()[v].agent;
    auto idx = out.index_of(name);
    if (!idx) {
      out.agents.push_back(name);
      idx = out.agents.size() - 1;
    }
    agent_of[v] = *idx;
  }
  std::map<Edge, double> contact;
  for (const auto& e : g.graph.edges()) {
    const auto a = agent_of[e.from];
    const auto b = agent_of[e.to];
    if (a == b) continue;
    const double t = g.graph.nodes()[e.from].timestamp;
    auto [it, inserted] = contact.emplace(Edge{a, b}, t);
    if (!inserted) it->second = std::min(it->second, t);
  }
  std::vector<NodeInfo> agent_nodes;
  for (std::size_t a = 0; a < out.agents.size(); ++a) agent_nodes.push_back({a, out.agents[a], 0.0});
  DiGraph ag(agent_nodes);
  for (const auto& [e, t] : contact) ag.add_edge(e.from, e.to);
  out.removed_edges = break_cycles_by(ag, [&](const Edge& e) { return contact.at(e); });
  out.edges = ag.edges();
  for (const auto& e : out.edges) out.contact_time.push_back(contact.at(e));
  return out;
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string to_dot(const DiGraph& g, const std::string& name) {
  std::ostringstream os;
  os << "digraph \"" << dot_escape(name) << "\" {\n";
  for (std::size_t v = 0; v < g.size(); ++v) {
    const auto& n = g.nodes()[v];
    os << "  n" << v << " [label=\"" << dot_escape(n.agent) << '@' << n.step << "\"];\n";
  }
  for (const auto& e : g.edges()) os << "  n" << e.from << " -> n" << e.to << ";\n";
  os << "}\n";
  return os.str();
}

std::string to_dot(const AgentGraph& g, const std::string& name) {
  std::ostringstream os;
  os << "digraph \"" << dot_escape(name) << "\" {\n";
  for (std::size_t a = 0; a < g.agents.size(); ++a) {
    os << "  a" << a << " [label=\"" << dot_escape(g.agents[a]) << "\"];\n";
  }
  for (const auto& e : g.edges) os << "  a" << e.from << " -> a" << e.to << ";\n";
  for (const auto& e : g.removed_edges) {
    os << "  a" << e.from << " -> a" << e.to << " [style=dashed, label=\"removed\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace masattr
