#include <gtest/gtest.h>

#include <random>

#include "sokg/graph.hpp"
#include "test_support.hpp"

namespace sokg {
namespace {

using testing::oracle_average_degree;
using testing::oracle_ball;
using testing::oracle_components;

Triple t(std::string s, std::string r, std::string o) { return Triple{std::move(s), std::move(r), std::move(o), {}}; }

KnowledgeGraph isolated(std::size_t n) {
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back(testing::node_label(i));
  return KnowledgeGraph("iso", nodes, {});
}

TEST(BuildGraph, EmptyInputIsValid) {
  auto g = build_graph({}, "a");
  EXPECT_EQ(g.node_count(), 0u);
  EXPECT_TRUE(g.edges().empty());
  auto m = structural_metrics(g);
  EXPECT_EQ(m.component_count, 0u);
  EXPECT_EQ(m.average_degree, 0.0);
  EXPECT_EQ(m.nfi, 0.0);
}

TEST(BuildGraph, PollinationChain) {
  std::vector<Triple> ts = {t("bees", "facilitate", "cross-pollination"),
                            t("cross-pollination", "contributes to", "genetic diversity")};
  auto g = build_graph(ts, "a");
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_EQ(g.edges().size(), 2u);
  EXPECT_EQ(connected_components(g), 1u);
}

TEST(BuildGraph, DuplicatesCollapseWithMergedProvenance) {
  std::vector<Triple> ts = {Triple{"a", "r", "b", {{"doc", 0}}}, Triple{"a", "r", "b", {{"doc", 3}}}};
  auto g = build_graph(ts, "doc");
  EXPECT_EQ(g.node_count(), 2u);
  ASSERT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.edges()[0].provenance.size(), 2u);
}

TEST(BuildGraph, KeepsEdgeOrderAndIsIdempotent) {
  std::vector<Triple> ts = {t("z", "r", "a"), t("a", "s", "m"), t("z", "r", "a"), t("m", "r", "m")};
  auto g = build_graph(ts, "x");
  ASSERT_EQ(g.edges().size(), 3u);
  EXPECT_EQ(g.edges()[0].subject, "z");
  EXPECT_EQ(g.edges()[1].subject, "a");
  auto again = build_graph(g.edges(), "x");
  EXPECT_EQ(again.nodes(), g.nodes());
  ASSERT_EQ(again.edges().size(), g.edges().size());
  for (std::size_t i = 0; i < g.edges().size(); ++i) EXPECT_TRUE(again.edges()[i].same_fact(g.edges()[i]));
}

TEST(KnowledgeGraphCtor, RejectsBrokenInvariants) {
  EXPECT_THROW(KnowledgeGraph("x", {"a", "a"}, {}), GraphError);
  EXPECT_THROW(KnowledgeGraph("x", {"a"}, {t("a", "r", "b")}), GraphError);
}

TEST(Components, SmallCases) {
  EXPECT_EQ(connected_components(build_graph(std::vector<Triple>{t("a", "r", "b"), t("b", "r", "c")}, "p")), 1u);
  EXPECT_EQ(connected_components(isolated(5)), 5u);
}

TEST(Components, MatchFloodFillOnRandom30NodeGraphs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto rg = testing::random_graph(rng, 30);
    auto g = testing::to_graph(rg);
    EXPECT_EQ(connected_components(g), oracle_components(rg.nodes, g.edges())) << "trial " << trial;
  }
}

TEST(Metrics, Star) {
  auto g = build_graph(std::vector<Triple>{t("c", "r", "a"), t("c", "r", "b"), t("d", "r", "c")}, "star");
  auto m = structural_metrics(g);
  EXPECT_EQ(m.node_count, 4u);
  EXPECT_EQ(m.unique_edge_count, 3u);
  EXPECT_DOUBLE_EQ(m.average_degree, 1.5);
  EXPECT_EQ(m.component_count, 1u);
  EXPECT_EQ(m.nfi, 0.0);
}

TEST(Metrics, EdgelessIsFullyFragmented) {
  auto m = structural_metrics(isolated(5));
  EXPECT_EQ(m.average_degree, 0.0);
  EXPECT_EQ(m.component_count, 5u);
  EXPECT_DOUBLE_EQ(m.nfi, 1.0);
}

TEST(Metrics, TwoTriangles) {
  std::vector<Triple> ts = {t("a", "r", "b"), t("b", "r", "c"), t("c", "r", "a"),
                            t("x", "r", "y"), t("y", "r", "z"), t("z", "r", "x")};
  auto g = build_graph(ts, "tri");
  auto m = structural_metrics(g);
  EXPECT_EQ(m.component_count, 2u);
  EXPECT_DOUBLE_EQ(m.nfi, 0.2);
  EXPECT_EQ(m.average_degree, oracle_average_degree(g.nodes(), g.edges()));
  EXPECT_DOUBLE_EQ(m.average_degree, 2.0);
}

TEST(Metrics, ParallelAndReversedEdgesCountOnceSelfLoopsNever) {
  std::vector<Triple> ts = {t("a", "r", "b"), t("a", "s", "b"), t("b", "r", "a"), t("a", "r", "a")};
  auto m = structural_metrics(build_graph(ts, "p"));
  EXPECT_EQ(m.unique_edge_count, 1u);
  EXPECT_EQ(m.triple_count, 4u);
  EXPECT_DOUBLE_EQ(m.average_degree, 1.0);
}

TEST(Metrics, SingleNodeHasZeroNfi) {
  auto m = structural_metrics(build_graph(std::vector<Triple>{t("a", "r", "a")}, "loop"));
  EXPECT_EQ(m.node_count, 1u);
  EXPECT_EQ(m.nfi, 0.0);
}

TEST(Metrics, MatchOraclesOnRandomGraphs) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 200; ++trial) {
    auto rg = testing::random_graph(rng, 200);
    auto g = testing::to_graph(rg);
    auto m = structural_metrics(g);
    const auto c = oracle_components(rg.nodes, g.edges());
    EXPECT_EQ(m.average_degree, oracle_average_degree(rg.nodes, g.edges())) << "trial " << trial;
    EXPECT_EQ(m.component_count, c);
    EXPECT_GE(m.triple_count, m.unique_edge_count);
    EXPECT_GE(m.nfi, 0.0);
    EXPECT_LE(m.nfi, 1.0);
    if (m.node_count >= 2) {
      EXPECT_DOUBLE_EQ(m.nfi, static_cast<double>(c - 1) / static_cast<double>(m.node_count - 1));
      EXPECT_EQ(m.nfi == 0.0, c == 1);
    }
  }
}

TEST(Metrics, BridgingComponentsNeverRaisesNfi) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto rg = testing::random_graph(rng, 60);
    if (rg.nodes.size() < 2) continue;
    auto before = structural_metrics(testing::to_graph(rg));
    std::uniform_int_distribution<std::size_t> pick(0, rg.nodes.size() - 1);
    rg.edges.push_back(Triple{rg.nodes[pick(rng)], "bridge", rg.nodes[pick(rng)], {}});
    auto after = structural_metrics(testing::to_graph(rg));
    EXPECT_LE(after.nfi, before.nfi);
  }
}

TEST(TwoHop, PathCutoff) {
  auto g = build_graph(std::vector<Triple>{t("a", "r", "b"), t("b", "r", "c"), t("c", "r", "d")}, "p");
  auto sub = two_hop_subgraph(g, {"a"}, 2);
  EXPECT_EQ(sub.nodes(), (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(sub.edges().size(), 2u);
  EXPECT_EQ(sub.edges()[0].object, "b");
  EXPECT_EQ(sub.edges()[1].object, "c");
}

TEST(TwoHop, ZeroHopsIsInducedOnSeeds) {
  auto g = build_graph(std::vector<Triple>{t("a", "r", "b"), t("b", "r", "c"), t("c", "r", "d")}, "p");
  auto sub = two_hop_subgraph(g, {"b", "c"}, 0);
  EXPECT_EQ(sub.nodes(), (std::vector<std::string>{"b", "c"}));
  ASSERT_EQ(sub.edges().size(), 1u);
}

TEST(TwoHop, UnknownSeedNamesTheLabel) {
  auto g = build_graph(std::vector<Triple>{t("a", "r", "b")}, "p");
  try {
    two_hop_subgraph(g, {"ghost"}, 2);
    FAIL();
  } catch (const GraphError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
  EXPECT_THROW(two_hop_subgraph(g, {"a"}, -1), GraphError);
}

TEST(TwoHop, MatchesBfsOracleAndIsMonotoneInHops) {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    auto rg = testing::random_graph(rng, 80);
    if (rg.nodes.empty()) continue;
    auto g = testing::to_graph(rg);
    std::vector<std::string> seeds;
    std::uniform_int_distribution<std::size_t> pick(0, rg.nodes.size() - 1);
    for (int i = 0; i < 8; ++i) seeds.push_back(rg.nodes[pick(rng)]);
    std::set<std::string> previous;
    for (int hops = 0; hops <= 3; ++hops) {
      auto sub = two_hop_subgraph(g, seeds, hops);
      std::set<std::string> got(sub.nodes().begin(), sub.nodes().end());
      auto want = oracle_ball(rg.nodes, g.edges(), seeds, hops);
      EXPECT_EQ(got, want) << "trial " << trial << " hops " << hops;
      EXPECT_TRUE(std::includes(got.begin(), got.end(), previous.begin(), previous.end()));
      for (const auto& e : sub.edges()) {
        EXPECT_TRUE(got.count(e.subject) && got.count(e.object));
      }
      std::size_t induced = std::count_if(g.edges().begin(), g.edges().end(), [&](const Triple& e) {
        return got.count(e.subject) && got.count(e.object);
      });
      EXPECT_EQ(sub.edges().size(), induced);
      previous = std::move(got);
    }
  }
}

TEST(Serialization, JsonRoundTrip) {
  std::vector<Triple> ts = {Triple{"a", "r", "b", {{"d", 1}}}, Triple{"b", "s", "c", {{"d", std::nullopt}}}};
  auto g = build_graph(ts, "d");
  auto j = graph_to_json(g);
  EXPECT_EQ(j["article_id"], "d");
  EXPECT_EQ(j["entities"].size(), 3u);
  auto back = graph_from_json(j);
  EXPECT_EQ(back.nodes(), g.nodes());
  EXPECT_EQ(back.edges()[0].provenance, g.edges()[0].provenance);
  EXPECT_FALSE(j["triples"][1]["provenance"][0].contains("qa_index"));
}

TEST(Serialization, DotEscapesLabels) {
  auto g = build_graph(std::vector<Triple>{t("say \"hi\"", "uses\\path", "line\nbreak")}, "q");
  auto dot = graph_to_dot(g);
  EXPECT_NE(dot.find(R"("say \"hi\"")"), std::string::npos);
  EXPECT_NE(dot.find(R"(label="uses\\path")"), std::string::npos);
  EXPECT_NE(dot.find(R"("line\nbreak")"), std::string::npos);
}

}  // namespace
}  // namespace sokg
