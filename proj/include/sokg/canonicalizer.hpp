#pragma once

// Cluster-then-refine canonicalization, run separately for entities and for
// relations:
//   1. embed every unique term,
//   2. partition the embeddings with seeded k-means++ into clusters of at most
//      `cluster_cap` members (oversized clusters are split again),
//   3. for each anchor, rank the other members of its cluster by the mean of
//      its cosine rank and its BM25 rank and keep the top k,
//   4. ask the chat model which candidates name the same concept and which
//      surface form is canonical,
//   5. fold accepted verdicts into a union-find and rewrite the triples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <spdlog/spdlog.h>

#include "sokg/graph.hpp"
#include "sokg/json_recovery.hpp"
#include "sokg/parallel.hpp"
#include "sokg/prompt_assets.hpp"
#include "sokg/providers.hpp"
#include "sokg/text.hpp"

namespace sokg {

enum class TermKind { entity, relation };

inline std::string_view term_kind_name(TermKind kind) {
  return kind == TermKind::entity ? "entity" : "relation";
}

struct TermTable {
  TermKind kind = TermKind::entity;
  std::vector<std::string> terms;
  std::vector<EmbeddingVector> vectors;

  std::size_t size() const noexcept { return terms.size(); }
};

/// Unique subjects and objects (entity) or relations, in first-occurrence order.
inline std::vector<std::string> collect_terms(std::span<const Triple> triples, TermKind kind) {
  std::vector<std::string> terms;
  std::unordered_set<std::string> seen;
  auto add = [&](const std::string& t) {
    if (seen.insert(t).second) terms.push_back(t);
  };
  for (const auto& t : triples) {
    if (kind == TermKind::entity) {
      add(t.subject);
      add(t.object);
    } else {
      add(t.relation);
    }
  }
  return terms;
}

inline TermTable build_term_table(std::span<const Triple> triples, TermKind kind, Embedder& embedder) {
  TermTable table{kind, collect_terms(triples, kind), {}};
  if (!table.terms.empty()) table.vectors = embedder.embed(table.terms);
  return table;
}

struct Cluster {
  std::vector<std::size_t> members;  // indices into the TermTable, ascending
  std::vector<double> centroid;
};

namespace detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementation.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<double> mean_of(const TermTable& table, std::span<const std::size_t> members) {
  std::vector<double> c(table.vectors.at(members.front()).values.size(), 0.0);
  for (auto m : members) {
    const auto& v = table.vectors[m].values;
    for (std::size_t d = 0; d < c.size(); ++d) c[d] += v[d];
  }
  for (auto& x : c) x /= static_cast<double>(members.size());
  return c;
}

/// Lloyd's k-means with k-means++ seeding over the given table rows. Returns
/// the cluster id of each row. Distances are squared Euclidean on unit
/// vectors, i.e. 2 - 2cos; ties go to the lowest centre.
inline std::vector<std::size_t> kmeans(const TermTable& table, std::span<const std::size_t> rows,
                                       std::size_t k, std::mt19937_64& rng, int max_iterations = 100) {
  const auto n = rows.size();
  auto point = [&](std::size_t i) -> const std::vector<double>& { return table.vectors[rows[i]].values; };

  std::vector<std::vector<double>> centres;
  std::vector<bool> chosen(n, false);
  auto first = static_cast<std::size_t>(rng() % n);
  centres.push_back(point(first));
  chosen[first] = true;
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(point(i), centres[0]);
  while (centres.size() < k) {
    double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      double target = unit_draw(rng) * total;
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        running += nearest[i];
        if (nearest[i] > 0.0 && running > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a centre; take the next unused row.
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    centres.push_back(point(pick));
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(point(i), centres.back()));
    }
  }

  std::vector<std::size_t> assignment(n, k);
  for (int iteration = 0; iteration < max_iterations; ++iteration) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(point(i), centres[0]);
      for (std::size_t c = 1; c < k; ++c) {
        double d = squared_distance(point(i), centres[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t i = 0; i < n; ++i) groups[assignment[i]].push_back(rows[i]);
    for (std::size_t c = 0; c < k; ++c) {
      if (!groups[c].empty()) centres[c] = mean_of(table, groups[c]);
    }
  }
  return assignment;
}

}  // namespace detail

inline constexpr std::size_t kDefaultClusterCap = 128;
inline constexpr std::size_t kDefaultCandidateK = 16;

/// Partitions the table into clusters of at most `cap` members. Deterministic
/// for a given seed.
inline std::vector<Cluster> partition_clusters(const TermTable& table, std::size_t cap = kDefaultClusterCap,
                                               std::uint64_t seed = 0) {
  if (cap == 0) throw std::invalid_argument("cluster cap must be at least 1");
  if (table.vectors.size() != table.terms.size()) {
    throw std::invalid_argument("term table has mismatched terms and vectors");
  }
  std::vector<Cluster> clusters;
  if (table.size() == 0) return clusters;
  std::mt19937_64 rng(seed);

  auto emit = [&](std::vector<std::size_t> members) {
    std::sort(members.begin(), members.end());
    auto centroid = detail::mean_of(table, members);
    clusters.push_back(Cluster{std::move(members), std::move(centroid)});
  };

  std::vector<std::size_t> all(table.size());
  std::iota(all.begin(), all.end(), 0);
  // Depth-first so the output order is a pure function of the input and seed.
  std::vector<std::vector<std::size_t>> pending{std::move(all)};
  while (!pending.empty()) {
    auto group = std::move(pending.back());
    pending.pop_back();
    if (group.size() <= cap) {
      emit(std::move(group));
      continue;
    }
    const auto k = (group.size() + cap - 1) / cap;
    auto assignment = detail::kmeans(table, group, k, rng);
    std::vector<std::vector<std::size_t>> parts(k);
    for (std::size_t i = 0; i < group.size(); ++i) parts[assignment[i]].push_back(group[i]);
    std::erase_if(parts, [](const auto& p) { return p.empty(); });
    if (parts.size() == 1) {
      // k-means cannot separate these points (e.g. identical vectors); fall
      // back to contiguous chunks of near-equal size.
      const auto chunk = (group.size() + k - 1) / k;
      parts.clear();
      for (std::size_t begin = 0; begin < group.size(); begin += chunk) {
        auto end = std::min(group.size(), begin + chunk);
        parts.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(begin),
                           group.begin() + static_cast<std::ptrdiff_t>(end));
      }
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) pending.push_back(std::move(*it));
  }
  return clusters;
}

/// Okapi BM25 over a small corpus of token lists.
class Bm25 {
 public:
  Bm25(std::vector<std::vector<std::string>> documents, double k1 = 1.2, double b = 0.75)
      : documents_(std::move(documents)), k1_(k1), b_(b) {
    double total = 0.0;
    for (const auto& doc : documents_) {
      total += static_cast<double>(doc.size());
      std::set<std::string> unique(doc.begin(), doc.end());
      for (const auto& tok : unique) ++document_frequency_[tok];
    }
    average_length_ = documents_.empty() ? 0.0 : total / static_cast<double>(documents_.size());
  }

  double idf(const std::string& token) const {
    auto it = document_frequency_.find(token);
    double df = it == document_frequency_.end() ? 0.0 : static_cast<double>(it->second);
    double n = static_cast<double>(documents_.size());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  }

  /// Query terms are counted once each.
  double score(const std::vector<std::string>& query, std::size_t doc_index) const {
    const auto& doc = documents_.at(doc_index);
    if (doc.empty() || average_length_ == 0.0) return 0.0;
    std::set<std::string> terms(query.begin(), query.end());
    double s = 0.0;
    const double length_norm = 1.0 - b_ + b_ * static_cast<double>(doc.size()) / average_length_;
    for (const auto& term : terms) {
      auto tf = static_cast<double>(std::count(doc.begin(), doc.end(), term));
      if (tf == 0.0) continue;
      s += idf(term) * tf * (k1_ + 1.0) / (tf + k1_ * length_norm);
    }
    return s;
  }

 private:
  std::vector<std::vector<std::string>> documents_;
  double k1_;
  double b_;
  double average_length_ = 0.0;
  std::map<std::string, std::size_t> document_frequency_;
};

namespace detail {

/// 1-based ranks by descending score; tied scores share their mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> ranks(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

struct RankedCandidate {
  std::size_t term = 0;  // index into the TermTable
  double dense_score = 0.0;
  double sparse_score = 0.0;
  double dense_rank = 0.0;
  double sparse_rank = 0.0;
  double fused_rank = 0.0;
};

/// Top min(k, |cluster|-1) members of the anchor's cluster by the mean of the
/// cosine rank and the BM25 rank (k1 = 1.2, b = 0.75, corpus = the cluster).
/// Ties: dense rank, then term text.
inline std::vector<RankedCandidate> rank_candidates(const TermTable& table, const Cluster& cluster,
                                                    std::size_t anchor, std::size_t k = kDefaultCandidateK) {
  if (std::find(cluster.members.begin(), cluster.members.end(), anchor) == cluster.members.end()) {
    throw std::invalid_argument("anchor is not a member of the cluster");
  }
  std::vector<std::vector<std::string>> docs;
  docs.reserve(cluster.members.size());
  for (auto m : cluster.members) docs.push_back(tokenize(table.terms[m]));
  Bm25 bm25(docs);
  const auto query = tokenize(table.terms[anchor]);

  std::vector<RankedCandidate> out;
  std::vector<double> dense, sparse;
  for (std::size_t i = 0; i < cluster.members.size(); ++i) {
    auto m = cluster.members[i];
    if (m == anchor) continue;
    RankedCandidate c;
    c.term = m;
    c.dense_score = cosine(table.vectors[anchor], table.vectors[m]);
    c.sparse_score = bm25.score(query, i);
    dense.push_back(c.dense_score);
    sparse.push_back(c.sparse_score);
    out.push_back(c);
  }
  auto dense_ranks = detail::average_ranks(dense);
  auto sparse_ranks = detail::average_ranks(sparse);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].dense_rank = dense_ranks[i];
    out[i].sparse_rank = sparse_ranks[i];
    out[i].fused_rank = (dense_ranks[i] + sparse_ranks[i]) / 2.0;
  }
  std::sort(out.begin(), out.end(), [&](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.fused_rank != b.fused_rank) return a.fused_rank < b.fused_rank;
    if (a.dense_rank != b.dense_rank) return a.dense_rank < b.dense_rank;
    return table.terms[a.term] < table.terms[b.term];
  });
  if (out.size() > k) out.resize(k);
  return out;
}

inline std::vector<std::string> candidate_matches(const TermTable& table, const Cluster& cluster,
                                                  std::size_t anchor, std::size_t k = kDefaultCandidateK) {
  std::vector<std::string> terms;
  for (const auto& c : rank_candidates(table, cluster, anchor, k)) terms.push_back(table.terms[c.term]);
  return terms;
}

struct MergeVerdict {
  std::vector<std::string> merge;  // candidates judged to be the anchor's concept
  std::string representative;
  std::string status;  // merged | no_merge | discarded | unparseable
};

inline void to_json(json& j, const MergeVerdict& v) {
  j = json{{"merge", v.merge}, {"representative", v.representative}, {"status", v.status}};
}

struct MergeOptions {
  std::string model;
  double temperature = 0.0;
  int max_output = 1024;
};

inline std::string render_merge_prompt(const std::string& anchor, const std::vector<std::string>& candidates,
                                       TermKind kind) {
  std::string listing;
  for (const auto& c : candidates) listing += "- \"" + c + "\"\n";
  return render_template(prompt_assets::merge, {{"kind", std::string(term_kind_name(kind))},
                                                {"anchor", anchor},
                                                {"candidates", listing}});
}

/// Interprets a merge reply. Merged names outside the candidate list are
/// ignored; a representative outside anchor + merged set voids the verdict.
inline MergeVerdict parse_merge_reply(std::string_view reply, const std::string& anchor,
                                      const std::vector<std::string>& candidates) {
  MergeVerdict verdict{{}, anchor, "no_merge"};
  json obj;
  try {
    obj = parse_json_object(reply);
  } catch (const ParseError&) {
    verdict.status = "unparseable";
    return verdict;
  }
  if (!obj.contains("merge") || !obj["merge"].is_array()) {
    verdict.status = "unparseable";
    return verdict;
  }
  std::set<std::string> named;
  for (const auto& item : obj["merge"]) {
    if (item.is_string()) named.insert(item.get<std::string>());
  }
  for (const auto& c : candidates) {
    if (named.count(c) && c != anchor) verdict.merge.push_back(c);
  }
  if (verdict.merge.empty()) return verdict;
  if (!obj.contains("representative") || !obj["representative"].is_string()) {
    verdict.merge.clear();
    verdict.status = "discarded";
    return verdict;
  }
  auto rep = obj["representative"].get<std::string>();
  if (rep != anchor && std::find(verdict.merge.begin(), verdict.merge.end(), rep) == verdict.merge.end()) {
    verdict.merge.clear();
    verdict.representative = anchor;
    verdict.status = "discarded";
    return verdict;
  }
  verdict.representative = rep;
  verdict.status = "merged";
  return verdict;
}

inline MergeVerdict llm_merge(ChatClient& chat, const std::string& anchor,
                              const std::vector<std::string>& candidates, TermKind kind,
                              const MergeOptions& options) {
  if (candidates.empty()) return MergeVerdict{{}, anchor, "no_merge"};
  auto reply = chat.chat(ChatRequest{render_merge_prompt(anchor, candidates, kind), options.model,
                                     options.temperature, options.max_output});
  auto verdict = parse_merge_reply(reply, anchor, candidates);
  if (verdict.status == "unparseable" || verdict.status == "discarded") {
    spdlog::warn("merge verdict for '{}' {}: {}", anchor, verdict.status, reply);
  }
  return verdict;
}

/// Union-find over term indices; each class carries a chosen representative.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), representative_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
    std::iota(representative_.begin(), representative_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    auto ra = find(a);
    auto rb = find(b);
    if (ra == rb) return;
    if (rb < ra) std::swap(ra, rb);
    parent_[rb] = ra;
  }

  void set_representative(std::size_t member, std::size_t rep) { representative_[find(member)] = rep; }
  std::size_t representative(std::size_t member) { return representative_[find(member)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> representative_;
};

/// variant -> canonical. Terms not listed map to themselves, so canonical
/// forms are fixed points.
struct CanonicalMap {
  TermKind kind = TermKind::entity;
  std::map<std::string, std::string> mapping;

  const std::string& apply(const std::string& term) const {
    auto it = mapping.find(term);
    return it == mapping.end() ? term : it->second;
  }
};

inline void to_json(json& j, const CanonicalMap& m) {
  j = json{{"kind", term_kind_name(m.kind)}, {"mapping", m.mapping}};
}

inline void from_json(const json& j, CanonicalMap& m) {
  m.kind = j.at("kind").get<std::string>() == "relation" ? TermKind::relation : TermKind::entity;
  m.mapping = j.at("mapping").get<std::map<std::string, std::string>>();
}

struct CanonicalizerOptions {
  std::size_t cluster_cap = kDefaultClusterCap;
  std::size_t candidate_k = kDefaultCandidateK;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  MergeOptions merge;
};

/// One line of the merge-audit log.
struct MergeAudit {
  TermKind kind = TermKind::entity;
  std::size_t cluster = 0;
  std::string anchor;
  std::vector<std::string> candidates;
  MergeVerdict verdict;
};

inline void to_json(json& j, const MergeAudit& a) {
  j = json{{"kind", term_kind_name(a.kind)},
           {"cluster", a.cluster},
           {"anchor", a.anchor},
           {"candidates", a.candidates},
           {"verdict", a.verdict}};
}

namespace detail {

/// Shortest surface form, then lexicographic.
inline bool preferred_form(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace detail

/// Canonical map for one term kind. Clusters are refined independently (and
/// concurrently when workers > 1); verdicts are folded in cluster order, then
/// anchor order.
inline CanonicalMap canonicalize_terms(std::span<const Triple> triples, TermKind kind, Embedder& embedder,
                                       ChatClient& chat, const CanonicalizerOptions& options,
                                       std::vector<MergeAudit>* audit = nullptr) {
  CanonicalMap result{kind, {}};
  auto table = build_term_table(triples, kind, embedder);
  if (table.size() == 0) return result;
  auto clusters = partition_clusters(table, options.cluster_cap, options.seed);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.size(); ++i) index.emplace(table.terms[i], i);

  std::vector<std::vector<MergeAudit>> per_cluster(clusters.size());
  parallel_for(clusters.size(), options.workers, [&](std::size_t ci) {
    const auto& cluster = clusters[ci];
    UnionFind local(table.size());
    for (auto anchor : cluster.members) {
      std::vector<std::string> candidates;
      for (const auto& c : rank_candidates(table, cluster, anchor, options.candidate_k)) {
        if (local.find(c.term) != local.find(anchor)) candidates.push_back(table.terms[c.term]);
      }
      if (candidates.empty()) continue;
      auto verdict = llm_merge(chat, table.terms[anchor], candidates, kind, options.merge);
      if (verdict.status == "merged") {
        for (const auto& m : verdict.merge) local.unite(anchor, index.at(m));
      }
      per_cluster[ci].push_back(MergeAudit{kind, ci, table.terms[anchor], candidates, verdict});
    }
  });

  UnionFind classes(table.size());
  for (auto& records : per_cluster) {
    for (auto& record : records) {
      if (record.verdict.status == "merged") {
        auto a = index.at(record.anchor);
        for (const auto& m : record.verdict.merge) classes.unite(a, index.at(m));
        classes.set_representative(a, index.at(record.verdict.representative));
      }
      if (audit) audit->push_back(std::move(record));
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < table.size(); ++i) members[classes.find(i)].push_back(i);
  for (const auto& [root, group] : members) {
    if (group.size() < 2) continue;
    std::size_t rep = classes.representative(root);
    if (std::find(group.begin(), group.end(), rep) == group.end()) {
      rep = *std::min_element(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
        return detail::preferred_form(table.terms[a], table.terms[b]);
      });
    }
    for (auto m : group) {
      if (m != rep) result.mapping.emplace(table.terms[m], table.terms[rep]);
    }
  }
  return result;
}

/// Rewrites triples through both maps and collapses exact duplicates, merging
/// provenance. Order follows first occurrence.
inline std::vector<Triple> apply_canonical_maps(std::span<const Triple> triples, const CanonicalMap& entities,
                                                const CanonicalMap& relations) {
  std::vector<Triple> out;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> seen;
  for (const auto& t : triples) {
    Triple c{entities.apply(t.subject), relations.apply(t.relation), entities.apply(t.object), t.provenance};
    auto key = std::make_tuple(c.subject, c.relation, c.object);
    if (auto it = seen.find(key); it != seen.end()) {
      auto& prov = out[it->second].provenance;
      prov.insert(prov.end(), c.provenance.begin(), c.provenance.end());
      continue;
    }
    seen.emplace(std::move(key), out.size());
    out.push_back(std::move(c));
  }
  return out;
}

struct CanonicalizationResult {
  std::vector<Triple> triples;
  CanonicalMap entities{TermKind::entity, {}};
  CanonicalMap relations{TermKind::relation, {}};
  std::vector<MergeAudit> audit;
};

inline CanonicalizationResult canonicalize(std::span<const Triple> triples, Embedder& embedder, ChatClient& chat,
                                           const CanonicalizerOptions& options) {
  CanonicalizationResult result;
  result.entities = canonicalize_terms(triples, TermKind::entity, embedder, chat, options, &result.audit);
  result.relations = canonicalize_terms(triples, TermKind::relation, embedder, chat, options, &result.audit);
  result.triples = apply_canonical_maps(triples, result.entities, result.relations);
  return result;
}

}  // namespace sokg
