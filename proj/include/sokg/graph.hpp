#pragma once

// Knowledge graph data model and the structural metrics reported per graph:
// node count N, unique undirected edge count E, average degree 2E/N, connected
// components C, the normalized fragmentation index (C-1)/(N-1), and #Tri.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <tuple>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sokg/text.hpp"

namespace sokg {

using json = nlohmann::json;

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Where a triple came from: the document and, in QA-mediated mode, the index
/// of the QA pair it was extracted from.
struct Provenance {
  std::string document_id;
  std::optional<int> qa_index;

  auto operator<=>(const Provenance&) const = default;
};

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
  std::vector<Provenance> provenance;

  /// Identity of the fact; provenance is metadata.
  bool same_fact(const Triple& other) const {
    return subject == other.subject && relation == other.relation && object == other.object;
  }
};

/// Empty when the triple satisfies the data-model invariants, otherwise the reason.
inline std::string triple_invariant_violation(const Triple& t) {
  const std::pair<const char*, const std::string*> fields[] = {
      {"subject", &t.subject}, {"relation", &t.relation}, {"object", &t.object}};
  for (auto [name, value] : fields) {
    if (trim(*value).empty()) return std::string(name) + " is empty";
    auto tokens = tokenize(*value);
    if (!tokens.empty() &&
        std::all_of(tokens.begin(), tokens.end(),
                    [](const std::string& tok) { return is_blacklisted_pronoun(tok); })) {
      return std::string(name) + " consists only of pronouns";
    }
  }
  return {};
}

inline void to_json(json& j, const Provenance& p) {
  j = json{{"document_id", p.document_id}};
  if (p.qa_index) j["qa_index"] = *p.qa_index;
}

inline void from_json(const json& j, Provenance& p) {
  j.at("document_id").get_to(p.document_id);
  if (j.contains("qa_index")) {
    p.qa_index = j.at("qa_index").get<int>();
  } else {
    p.qa_index.reset();
  }
}

inline void to_json(json& j, const Triple& t) {
  j = json{{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}};
  if (!t.provenance.empty()) j["provenance"] = t.provenance;
}

inline void from_json(const json& j, Triple& t) {
  j.at("subject").get_to(t.subject);
  j.at("relation").get_to(t.relation);
  j.at("object").get_to(t.object);
  t.provenance = j.value("provenance", std::vector<Provenance>{});
}

/// Immutable directed multigraph over canonical entity labels. Node identity is
/// exact string equality; nodes are kept sorted.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  KnowledgeGraph(std::string article_id, std::vector<std::string> nodes, std::vector<Triple> edges)
      : article_id_(std::move(article_id)), nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::sort(nodes_.begin(), nodes_.end());
    if (std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end()) {
      throw GraphError("duplicate node label in graph " + article_id_);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i], i);
    adjacency_.resize(nodes_.size());
    for (const auto& e : edges_) {
      auto s = index_of(e.subject);
      auto o = index_of(e.object);
      if (!s || !o) {
        throw GraphError("edge endpoint missing from node set: " +
                         (s ? e.object : e.subject));
      }
      if (*s == *o) continue;
      adjacency_[*s].push_back(*o);
      adjacency_[*o].push_back(*s);
    }
    for (auto& nbrs : adjacency_) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
  }

  const std::string& article_id() const noexcept { return article_id_; }
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  const std::vector<Triple>& edges() const noexcept { return edges_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  std::optional<std::size_t> index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Unique undirected neighbours, self excluded, ascending node index.
  const std::vector<std::size_t>& neighbors(std::size_t node) const { return adjacency_.at(node); }

 private:
  std::string article_id_;
  std::vector<std::string> nodes_;
  std::vector<Triple> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Collapses identical (s, r, o) triples into one edge with merged provenance.
/// Edge order follows first occurrence.
inline KnowledgeGraph build_graph(std::span<const Triple> triples, std::string article_id) {
  std::vector<Triple> edges;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> seen;
  std::set<std::string> nodes;
  for (const auto& t : triples) {
    if (auto why = triple_invariant_violation(t); !why.empty()) {
      throw GraphError("invalid triple (" + t.subject + ", " + t.relation + ", " + t.object +
                       "): " + why);
    }
    nodes.insert(t.subject);
    nodes.insert(t.object);
    auto key = std::make_tuple(t.subject, t.relation, t.object);
    if (auto it = seen.find(key); it != seen.end()) {
      auto& prov = edges[it->second].provenance;
      prov.insert(prov.end(), t.provenance.begin(), t.provenance.end());
      continue;
    }
    seen.emplace(std::move(key), edges.size());
    edges.push_back(t);
  }
  return KnowledgeGraph(std::move(article_id), {nodes.begin(), nodes.end()}, std::move(edges));
}

/// Components of the undirected view; isolated nodes count individually.
inline std::size_t connected_components(const KnowledgeGraph& graph) {
  const auto n = graph.node_count();
  std::vector<bool> visited(n, false);
  std::size_t components = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (visited[start]) continue;
    ++components;
    visited[start] = true;
    stack.push_back(start);
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (auto w : graph.neighbors(v)) {
        if (!visited[w]) {
          visited[w] = true;
          stack.push_back(w);
        }
      }
    }
  }
  return components;
}

struct StructuralMetrics {
  std::size_t node_count = 0;
  std::size_t unique_edge_count = 0;
  double average_degree = 0.0;
  std::size_t component_count = 0;
  double nfi = 0.0;
  std::size_t triple_count = 0;

  bool operator==(const StructuralMetrics&) const = default;
};

inline void to_json(json& j, const StructuralMetrics& m) {
  j = json{{"N", m.node_count},         {"E", m.unique_edge_count}, {"Deg", m.average_degree},
           {"C", m.component_count},    {"NFI", m.nfi},             {"Tri", m.triple_count}};
}

inline void from_json(const json& j, StructuralMetrics& m) {
  j.at("N").get_to(m.node_count);
  j.at("E").get_to(m.unique_edge_count);
  j.at("Deg").get_to(m.average_degree);
  j.at("C").get_to(m.component_count);
  j.at("NFI").get_to(m.nfi);
  j.at("Tri").get_to(m.triple_count);
}

/// Deg = 2E/N with E the unique unordered non-loop entity pairs; NFI is 0 for N < 2.
inline StructuralMetrics structural_metrics(const KnowledgeGraph& graph) {
  StructuralMetrics m;
  m.node_count = graph.node_count();
  m.triple_count = graph.edges().size();
  std::size_t degree_sum = 0;
  for (std::size_t v = 0; v < m.node_count; ++v) degree_sum += graph.neighbors(v).size();
  m.unique_edge_count = degree_sum / 2;
  m.average_degree =
      m.node_count == 0 ? 0.0
                        : 2.0 * static_cast<double>(m.unique_edge_count) / static_cast<double>(m.node_count);
  m.component_count = connected_components(graph);
  if (m.node_count >= 2) {
    m.nfi = static_cast<double>(m.component_count - 1) / static_cast<double>(m.node_count - 1);
  }
  return m;
}

/// Induced subgraph on every node within undirected distance `hops` of a seed.
inline KnowledgeGraph two_hop_subgraph(const KnowledgeGraph& graph,
                                       const std::vector<std::string>& seeds, int hops = 2) {
  if (hops < 0) throw GraphError("hops must be non-negative");
  const auto n = graph.node_count();
  std::vector<int> dist(n, -1);
  std::deque<std::size_t> queue;
  for (const auto& label : seeds) {
    auto idx = graph.index_of(label);
    if (!idx) throw GraphError("unknown seed node: " + label);
    if (dist[*idx] < 0) {
      dist[*idx] = 0;
      queue.push_back(*idx);
    }
  }
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    if (dist[v] == hops) continue;
    for (auto w : graph.neighbors(v)) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i] >= 0) kept.push_back(graph.nodes()[i]);
  }
  std::vector<Triple> edges;
  for (const auto& e : graph.edges()) {
    if (dist[*graph.index_of(e.subject)] >= 0 && dist[*graph.index_of(e.object)] >= 0) {
      edges.push_back(e);
    }
  }
  return KnowledgeGraph(graph.article_id(), std::move(kept), std::move(edges));
}

inline json graph_to_json(const KnowledgeGraph& graph) {
  return json{{"article_id", graph.article_id()},
              {"entities", graph.nodes()},
              {"triples", graph.edges()}};
}

inline KnowledgeGraph graph_from_json(const json& j) {
  return KnowledgeGraph(j.at("article_id").get<std::string>(),
                        j.at("entities").get<std::vector<std::string>>(),
                        j.at("triples").get<std::vector<Triple>>());
}

inline std::string dot_escape(std::string_view label) {
  std::string out;
  for (char c : label) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string graph_to_dot(const KnowledgeGraph& graph) {
  std::string out = "digraph \"" + dot_escape(graph.article_id()) + "\" {\n";
  out += "  node [shape=box];\n";
  for (const auto& node : graph.nodes()) out += "  \"" + dot_escape(node) + "\";\n";
  for (const auto& e : graph.edges()) {
    out += "  \"" + dot_escape(e.subject) + "\" -> \"" + dot_escape(e.object) + "\" [label=\"" +
           dot_escape(e.relation) + "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace sokg
