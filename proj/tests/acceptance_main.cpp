// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "sokg/sokg.hpp"
#include "test_support.hpp"

namespace {

using namespace sokg;
namespace fs = std::filesystem;

const fs::path kFixtures(SOKG_FIXTURE_DIR);

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool cond, const std::string& what) {
  if (!cond && o.pass) {
    o.pass = false;
    o.detail = what;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<Embedder> hash_embedder() {
  return std::make_shared<Embedder>(std::make_shared<HashEmbedder>(), std::make_shared<ResponseCache>(), "hash");
}

// 1. Structural metrics on random graphs.
Outcome metrics_on_random_graphs() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200 && o.pass; ++trial) {
    auto rg = testing::random_graph(rng, 200);
    auto g = testing::to_graph(rg);
    auto m = structural_metrics(g);
    const auto n = rg.nodes.size();
    const auto c = testing::oracle_components(rg.nodes, g.edges());
    const double nfi = n >= 2 ? static_cast<double>(c - 1) / static_cast<double>(n - 1) : 0.0;
    const auto tag = fmt::format("graph {} (N={})", trial, n);
    require(o, m.node_count == n, tag + ": N");
    require(o, std::abs(m.average_degree - testing::oracle_average_degree(rg.nodes, g.edges())) < 1e-12, tag + ": Deg");
    require(o, m.component_count == c, tag + ": C");
    require(o, std::abs(m.nfi - nfi) < 1e-12, tag + ": NFI");
    require(o, m.nfi >= 0.0 && m.nfi <= 1.0, tag + ": NFI out of [0,1]");
    require(o, m.triple_count == g.edges().size(), tag + ": #Tri");
  }
  auto elapsed = seconds_since(t0);
  require(o, elapsed < 10.0, fmt::format("took {:.2f}s", elapsed));
  if (o.pass) o.detail = fmt::format("200 graphs in {:.2f}s", elapsed);
  return o;
}

// 2. Fact subgraph retrieval against brute force.
Outcome retrieval_matches_brute_force() {
  Outcome o;
  std::mt19937_64 rng(77);
  auto emb = hash_embedder();
  for (int trial = 0; trial < 100 && o.pass; ++trial) {
    auto rg = testing::random_labelled_graph(rng);
    auto g = testing::to_graph(rg);
    GraphIndex index(g, *emb);
    Fact fact{testing::random_phrase(rng, 6), "a", 0};
    auto got = retrieve_fact_subgraph(fact, index, *emb);
    auto seeds = testing::oracle_seeds(fact.statement, rg.nodes, 8);
    require(o, got.seeds == seeds, fmt::format("pair {}: seeds differ", trial));
    auto ball = testing::oracle_ball(rg.nodes, g.edges(), seeds, 2);
    require(o, std::set<std::string>(got.subgraph.nodes().begin(), got.subgraph.nodes().end()) == ball,
            fmt::format("pair {}: subgraph differs", trial));
    for (const auto& e : got.subgraph.edges()) {
      require(o, ball.count(e.subject) && ball.count(e.object), fmt::format("pair {}: edge leaves ball", trial));
    }
  }
  if (o.pass) o.detail = "100 pairs";
  return o;
}

// 3. Clustering cap, partition and determinism.
Outcome clustering_cap_and_partition() {
  Outcome o;
  std::mt19937_64 rng(5);
  HashEmbedder embedder;
  std::size_t largest = 0;
  for (std::size_t n : {0ul, 1ul, 128ul, 129ul, 500ul, 1000ul, 2000ul}) {
    std::set<std::string> seen;
    std::vector<std::string> terms;
    while (terms.size() < n) {
      std::string t = testing::random_phrase(rng, 4);
      if (seen.size() > 5000) t += " " + std::to_string(terms.size());
      if (seen.insert(t).second) terms.push_back(t);
    }
    TermTable table{TermKind::entity, terms, {}};
    for (const auto& t : terms) table.vectors.push_back(embedder.embed_text(t));
    auto digest = [](const std::vector<Cluster>& cs) {
      json j = json::array();
      for (const auto& c : cs) j.push_back(c.members);
      return sha256_hex(j.dump());
    };
    auto clusters = partition_clusters(table, 128, 11);
    std::vector<int> covered(n, 0);
    for (const auto& c : clusters) {
      require(o, !c.members.empty() && c.members.size() <= 128, fmt::format("n={}: cluster size {}", n, c.members.size()));
      largest = std::max(largest, c.members.size());
      for (auto m : c.members) ++covered[m];
    }
    require(o, std::all_of(covered.begin(), covered.end(), [](int k) { return k == 1; }),
            fmt::format("n={}: not an exact partition", n));
    require(o, digest(partition_clusters(table, 128, 11)) == digest(clusters), fmt::format("n={}: nondeterministic", n));
  }
  if (o.pass) o.detail = fmt::format("tables up to 2000 terms, largest cluster {}", largest);
  return o;
}

// 4. Canonicalization laws.
std::string first_token_merge(const ChatRequest& req) {
  const auto& p = req.prompt;
  auto a = p.find("## ANCHOR\n\"") + 11;
  auto anchor = p.substr(a, p.find("\"\n", a) - a);
  auto c = p.find("## CANDIDATES\n") + 14;
  std::istringstream lines(p.substr(c, p.find("\n## OUTPUT", c) - c));
  auto head = tokenize(anchor);
  json merge = json::array();
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("- \"", 0) != 0) continue;
    auto cand = line.substr(3, line.size() - 4);
    auto toks = tokenize(cand);
    if (!head.empty() && !toks.empty() && toks[0] == head[0]) merge.push_back(cand);
  }
  return json{{"merge", merge}, {"representative", anchor}}.dump();
}

bool identical(const std::vector<Triple>& a, const std::vector<Triple>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_fact(b[i]) || a[i].provenance != b[i].provenance) return false;
  }
  return true;
}

Outcome canonicalization_laws() {
  Outcome o;
  std::mt19937_64 rng(404);
  auto emb = hash_embedder();
  const std::vector<std::string> relations = {"supports", "support", "leads to", "lead to", "causes", "part of"};
  std::size_t merged_sets = 0;
  for (int trial = 0; trial < 100 && o.pass; ++trial) {
    std::vector<Triple> input;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    const auto count = std::uniform_int_distribution<std::size_t>(0, 60)(rng);
    for (std::size_t guard = 0; input.size() < count && guard < 10 * count; ++guard) {
      Triple t{testing::random_phrase(rng, 3), relations[rng() % relations.size()], testing::random_phrase(rng, 3),
               {{"doc", static_cast<int>(input.size())}}};
      if (seen.insert({t.subject, t.relation, t.object}).second) input.push_back(t);
    }
    CanonicalizerOptions opts;
    opts.seed = static_cast<std::uint64_t>(trial);
    opts.cluster_cap = 1 + trial % 40;
    const auto tag = fmt::format("set {}", trial);

    ChatClient none(std::make_shared<MockChat>(std::vector<MockRule>{}, R"({"merge": []})"), nullptr);
    require(o, identical(canonicalize(input, *emb, none, opts).triples, input), tag + ": identity");

    ChatClient merging(std::make_shared<MockChat>(first_token_merge), nullptr);
    auto merged = canonicalize(input, *emb, merging, opts);
    merged_sets += merged.triples.size() < input.size();
    require(o, merged.triples.size() <= input.size(), tag + ": triple count grew");
    auto ents = collect_terms(input, TermKind::entity);
    auto rels = collect_terms(input, TermKind::relation);
    std::set<std::string> entity_pool(ents.begin(), ents.end()), relation_pool(rels.begin(), rels.end());
    for (const auto& t : merged.triples) {
      require(o, entity_pool.count(t.subject) && entity_pool.count(t.object) && relation_pool.count(t.relation),
              tag + ": invented term");
    }
    require(o, identical(canonicalize(merged.triples, *emb, none, opts).triples, merged.triples),
            tag + ": not idempotent");
  }
  if (o.pass) o.detail = fmt::format("100 sets, {} with merges", merged_sets);
  return o;
}

// 5. Validation fixture.
Outcome validation_fixture() {
  Outcome o;
  auto cases = json::parse(testing::slurp(kFixtures / "validation_cases.json"));
  std::size_t agree = 0;
  for (const auto& c : cases) {
    auto v = validate_triple({c["entity1"], c["entity2"], c["relation"], {"doc", 0}});
    const bool accept = c["expect"] == "accept";
    if (v.accepted == accept && (accept || v.reason == c["reason"].get<std::string>())) ++agree;
  }
  require(o, cases.size() == 30, fmt::format("fixture has {} cases", cases.size()));
  require(o, agree == cases.size(), fmt::format("{}/{} agree", agree, cases.size()));
  if (o.pass) o.detail = "30/30 agree";
  return o;
}

// 6. Deterministic, resumable mock run.
Outcome deterministic_mock_run() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  const std::set<std::string> skip = {"timestamps.json"};
  auto cfg = load_config(kFixtures / "config.json");
  auto docs = ingest_corpus(kFixtures / "corpus.jsonl");
  auto run_into = [&](const fs::path& dir, std::optional<Stage> stop, bool resume) {
    auto services = make_services(cfg.providers);
    RunOptions options;
    options.runs_dir = dir;
    options.stop_after = stop;
    options.resume = resume;
    return run_pipeline(docs, cfg, services, options);
  };
  testing::TempDir a("accept-a"), b("accept-b"), c("accept-c");
  auto first = run_into(a.path(), std::nullopt, false);
  auto second = run_into(b.path(), std::nullopt, false);
  require(o, first.report.has_value() && first.failed.empty(), "first run incomplete");
  auto reference = testing::snapshot_tree(first.run_dir, skip);
  require(o, reference == testing::snapshot_tree(second.run_dir, skip), "two runs differ");
  auto partial = run_into(c.path(), Stage::extract, false);
  require(o, !partial.report.has_value(), "interrupted run produced a report");
  auto resumed = run_into(c.path(), std::nullopt, true);
  require(o, reference == testing::snapshot_tree(resumed.run_dir, skip), "resumed run differs");
  auto elapsed = seconds_since(t0);
  require(o, elapsed < 30.0, fmt::format("took {:.2f}s", elapsed));
  if (o.pass) o.detail = fmt::format("{} files identical; {:.2f}s", reference.size(), elapsed);
  return o;
}

// 7. Retention on the 15-fact fixture.
Outcome retention_fixture() {
  Outcome o;
  auto fx = json::parse(testing::slurp(kFixtures / "retention_fifteen.json"));
  auto id = fx["article_id"].get<std::string>();
  auto graph = build_graph(fx["triples"].get<std::vector<Triple>>(), id);
  std::vector<Fact> facts;
  for (const auto& s : fx["facts"]) facts.push_back({s.get<std::string>(), id, static_cast<int>(facts.size())});
  auto emb = hash_embedder();
  ContainmentJudge judge;
  auto report = score_retention(facts, graph, *emb, judge);
  auto supported = fx["supported"].get<std::set<int>>();
  for (const auto& r : report.results) {
    require(o, r.supported == static_cast<bool>(supported.count(r.fact.index)), fmt::format("fact {}", r.fact.index));
  }
  require(o, report.score == fx["expected_score"].get<double>(), fmt::format("score {}", report.score));
  if (o.pass) o.detail = fmt::format("score {:.1f}", report.score);
  return o;
}

// 8. The pollination example: connected under sokg, fragmented under direct.
Outcome pollination_example() {
  Outcome o;
  auto cfg = load_config(kFixtures / "config.json");
  cfg.evaluate = false;
  std::vector<Document> docs;
  for (auto& d : ingest_corpus(kFixtures / "corpus.jsonl")) {
    if (d.id == "pollination") docs.push_back(d);
  }
  testing::TempDir dir("accept-pollination");
  auto graph_for = [&](ExtractionMode mode) {
    cfg.mode = mode;
    auto services = make_services(cfg.providers);
    RunOptions options;
    options.runs_dir = dir.path();
    auto out = run_pipeline(docs, cfg, services, options);
    return graph_from_json(read_json(out.run_dir / "pollination" / "graph.json"));
  };
  auto has_edge = [](const KnowledgeGraph& g, const std::string& s, const std::string& obj) {
    return std::any_of(g.edges().begin(), g.edges().end(),
                       [&](const Triple& t) { return t.subject == s && t.object == obj; });
  };
  auto same_component = [](const KnowledgeGraph& g, const std::string& x, const std::string& y) {
    if (!g.index_of(x) || !g.index_of(y)) return false;
    return testing::oracle_ball(g.nodes(), g.edges(), {x}, static_cast<int>(g.nodes().size())).count(y) > 0;
  };
  auto sokg_graph = graph_for(ExtractionMode::qa_mediated);
  require(o, has_edge(sokg_graph, "bees", "cross-pollination"), "sokg: missing bees -> cross-pollination");
  require(o, has_edge(sokg_graph, "cross-pollination", "genetic diversity"),
          "sokg: missing cross-pollination -> genetic diversity");
  auto direct_graph = graph_for(ExtractionMode::direct);
  require(o, !same_component(direct_graph, "bees", "genetic diversity"), "direct: bees reaches genetic diversity");
  auto ms = structural_metrics(sokg_graph), md = structural_metrics(direct_graph);
  require(o, md.nfi > ms.nfi, "direct graph is not more fragmented");
  if (o.pass) o.detail = fmt::format("sokg NFI {:.3f}, direct NFI {:.3f}", ms.nfi, md.nfi);
  return o;
}

// 9. Mean of per-graph degree.
Outcome aggregate_mean_degree() {
  Outcome o;
  auto rec = [](std::string id, std::size_t n, std::size_t e) {
    ArticleRecord r;
    r.article_id = std::move(id);
    r.mode = "sokg";
    r.model = "m";
    r.metrics.node_count = n;
    r.metrics.unique_edge_count = e;
    r.metrics.average_degree = 2.0 * static_cast<double>(e) / static_cast<double>(n);
    return r;
  };
  auto a = rec("a", 4, 2), b = rec("b", 2, 2);
  auto report = aggregate({a, b});
  const double pooled = 2.0 * 4.0 / 6.0;
  require(o, a.metrics.average_degree == 1.0 && b.metrics.average_degree == 2.0, "setup");
  require(o, pooled != 1.5, "pooled degree coincides");
  require(o, report.mean_degree == 1.5, fmt::format("Deg {}", report.mean_degree));
  if (o.pass) o.detail = fmt::format("Deg 1.5 (pooled would be {:.3f})", pooled);
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 structural metrics match oracles on 200 random graphs", metrics_on_random_graphs},
      {"C2 fact subgraph matches brute-force top-8 + 2-hop", retrieval_matches_brute_force},
      {"C3 clusters capped at 128, exact partition, deterministic", clustering_cap_and_partition},
      {"C4 canonicalization laws on 100 random triple sets", canonicalization_laws},
      {"C5 triple validation agrees with 30-case fixture", validation_fixture},
      {"C6 mock corpus runs byte-identical, resume-safe, < 30s", deterministic_mock_run},
      {"C7 12 of 15 supported facts scores 80.0", retention_fixture},
      {"C8 pollination path connected under sokg, fragmented under direct", pollination_example},
      {"C9 aggregate Deg is the mean of per-graph Deg", aggregate_mean_degree},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " -- " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
