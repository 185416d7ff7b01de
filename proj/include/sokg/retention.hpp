#pragma once

// Factual retention: for each ground-truth fact, retrieve the top-n nodes most
// similar to the statement plus everything within `hops` of them, serialize
// that subgraph as context, and let a judge decide whether the fact is
// supported. The score is the supported percentage.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <spdlog/spdlog.h>

#include "sokg/document.hpp"
#include "sokg/graph.hpp"
#include "sokg/judge.hpp"
#include "sokg/parallel.hpp"
#include "sokg/providers.hpp"

namespace sokg {

inline constexpr std::size_t kDefaultSeedCount = 8;
inline constexpr int kDefaultHops = 2;

/// A graph plus its node-label embeddings, computed once.
class GraphIndex {
 public:
  GraphIndex(const KnowledgeGraph& graph, Embedder& embedder) : graph_(&graph) {
    if (graph.node_count() > 0) vectors_ = embedder.embed(graph.nodes());
  }

  const KnowledgeGraph& graph() const noexcept { return *graph_; }
  const std::vector<EmbeddingVector>& vectors() const noexcept { return vectors_; }

 private:
  const KnowledgeGraph* graph_;
  std::vector<EmbeddingVector> vectors_;
};

/// Top min(top_n, N) labels by cosine to `query`; equal scores by label.
inline std::vector<std::string> select_seeds(const EmbeddingVector& query, const GraphIndex& index,
                                             std::size_t top_n = kDefaultSeedCount) {
  const auto& nodes = index.graph().nodes();
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) scored.emplace_back(cosine(query, index.vectors()[i]), i);
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return nodes[a.second] < nodes[b.second];
  });
  std::vector<std::string> seeds;
  for (std::size_t i = 0; i < std::min(top_n, scored.size()); ++i) seeds.push_back(nodes[scored[i].second]);
  return seeds;
}

struct FactSubgraph {
  KnowledgeGraph subgraph;
  std::vector<std::string> seeds;
};

inline FactSubgraph retrieve_fact_subgraph(const Fact& fact, const GraphIndex& index, Embedder& embedder,
                                           std::size_t top_n = kDefaultSeedCount, int hops = kDefaultHops) {
  const auto& graph = index.graph();
  if (graph.node_count() == 0) return {KnowledgeGraph(graph.article_id(), {}, {}), {}};
  auto seeds = select_seeds(embedder.embed_one(fact.statement), index, top_n);
  return {two_hop_subgraph(graph, seeds, hops), std::move(seeds)};
}

/// One "subject — relation — object" line per edge, sorted by (s, r, o).
inline std::string serialize_context(const KnowledgeGraph& subgraph) {
  std::vector<const Triple*> edges;
  for (const auto& e : subgraph.edges()) edges.push_back(&e);
  std::sort(edges.begin(), edges.end(), [](const Triple* a, const Triple* b) {
    return std::tie(a->subject, a->relation, a->object) < std::tie(b->subject, b->relation, b->object);
  });
  std::string out;
  for (const auto* e : edges) {
    if (!out.empty()) out.push_back('\n');
    out += e->subject;
    out += kContextSeparator;
    out += e->relation;
    out += kContextSeparator;
    out += e->object;
  }
  return out;
}

struct RetentionResult {
  Fact fact;
  bool supported = false;
  std::size_t subgraph_nodes = 0;
  std::size_t subgraph_edges = 0;
  std::vector<std::string> seeds;
  bool judge_failed = false;
  std::string error;
};

inline void to_json(json& j, const RetentionResult& r) {
  j = json{{"fact", r.fact.statement},
           {"index", r.fact.index},
           {"supported", r.supported},
           {"seeds", r.seeds},
           {"subgraph_size", {{"nodes", r.subgraph_nodes}, {"edges", r.subgraph_edges}}}};
  if (r.judge_failed) j["judge_error"] = r.error;
}

struct RetentionReport {
  double score = 0.0;  // percent in [0, 100]
  std::vector<RetentionResult> results;
};

struct RetentionOptions {
  std::size_t top_n = kDefaultSeedCount;
  int hops = kDefaultHops;
  std::size_t workers = 1;
};

/// Judge failures count as unsupported and are flagged; the run continues.
inline RetentionReport score_retention(const std::vector<Fact>& facts, const KnowledgeGraph& graph,
                                       Embedder& embedder, Judge& judge, const RetentionOptions& options = {}) {
  if (facts.empty()) throw std::invalid_argument("retention score is undefined for an empty fact list");
  GraphIndex index(graph, embedder);
  RetentionReport report;
  report.results.resize(facts.size());
  parallel_for(facts.size(), options.workers, [&](std::size_t i) {
    auto& r = report.results[i];
    r.fact = facts[i];
    auto retrieved = retrieve_fact_subgraph(facts[i], index, embedder, options.top_n, options.hops);
    r.seeds = retrieved.seeds;
    r.subgraph_nodes = retrieved.subgraph.node_count();
    r.subgraph_edges = retrieved.subgraph.edges().size();
    try {
      r.supported = judge.judge(facts[i].statement, serialize_context(retrieved.subgraph));
    } catch (const std::exception& e) {
      spdlog::warn("judge failed on fact {} of {}: {}", facts[i].index, facts[i].article_id, e.what());
      r.supported = false;
      r.judge_failed = true;
      r.error = e.what();
    }
  });
  auto supported = std::count_if(report.results.begin(), report.results.end(),
                                 [](const RetentionResult& r) { return r.supported; });
  report.score = 100.0 * static_cast<double>(supported) / static_cast<double>(facts.size());
  return report;
}

}  // namespace sokg
