#include <set>
#include <algorithm>
#include <sstream>

#include "cleve/amr_graph.hpp"
#include "cleve/corpus_io.hpp"
#include "cleve/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cleve;

namespace {

// Figure-style sentence: "CNN's Kelly Wallace reports today's attack in Netanya".
AmrGraph attack_report() {
  AmrGraph g;
  g.tokens = {"CNN's", "Kelly", "Wallace", "reports", "today's", "attack", "in", "Netanya"};
  g.nodes = {{0, "report-01", TokenSpan{3, 4}, {}}, {1, "person", TokenSpan{1, 2}, {}},
             {2, "name", std::nullopt, {}},         {3, "Kelly", TokenSpan{1, 2}, {}},
             {4, "Wallace", TokenSpan{2, 3}, {}},   {5, "attack-01", TokenSpan{5, 6}, {}},
             {6, "today", TokenSpan{4, 5}, {}},     {7, "city", TokenSpan{7, 8}, {}}};
  g.edges = {{0, 1, "ARG0"}, {1, 2, "name"},     {2, 3, "op1"},         {2, 4, "op2"},
             {0, 5, "ARG1"}, {5, 6, "time"},     {5, 7, "location"}};
  return g;
}

std::multiset<std::string> concept_multiset(const AmrGraph& g) {
  std::multiset<std::string> s;
  for (const auto& n : g.nodes) s.insert(n.concept_label);
  return s;
}

std::multiset<std::string> edge_multiset(const AmrGraph& g) {
  std::multiset<std::string> s;
  for (const auto& e : g.edges) s.insert(g.node(e.src).concept_label + "|" + e.rel + "|" + g.node(e.dst).concept_label);
  return s;
}

}  // namespace

TEST_CASE("core_relation covers ARG family, time and location") {
  CHECK(core_relation("ARG1"));
  CHECK(core_relation("ARG"));
  CHECK(core_relation("ARG12"));
  CHECK(core_relation("time"));
  CHECK(core_relation("location"));
  CHECK_FALSE(core_relation("op1"));
  CHECK_FALSE(core_relation("ARG1-of"));
  CHECK_FALSE(core_relation("mod"));
  CHECK_FALSE(core_relation("ARGx"));
}

TEST_CASE("read_corpus_jsonl") {
  SUBCASE("minimal line") {
    std::istringstream in(R"({"tokens":["a"],"nodes":[{"id":0,"concept":"a","span":[0,1]}],"edges":[]})" "\n");
    auto corpus = read_corpus_jsonl(in);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus[0].nodes.size() == 1);
    CHECK(corpus[0].nodes[0].span == TokenSpan{0, 1});
  }
  SUBCASE("dangling edge") {
    std::istringstream in(
        R"({"tokens":["a"],"nodes":[{"id":0,"concept":"a","span":[0,1]}],"edges":[{"src":0,"dst":5,"rel":"ARG0"}]})"
        "\n");
    CHECK_THROWS_AS(read_corpus_jsonl(in), ValidationError);
  }
  SUBCASE("malformed second line") {
    const std::string ok = R"({"tokens":["a"],"nodes":[{"id":0,"concept":"a","span":[0,1]}],"edges":[]})";
    std::istringstream in(ok + "\n{\"tokens\": [\n" + ok + "\n");
    try {
      read_corpus_jsonl(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.location() == 2);
    }
  }
  SUBCASE("cycle is rejected") {
    std::istringstream in(
        R"({"tokens":["a","b"],"nodes":[{"id":0,"concept":"a","span":[0,1]},{"id":1,"concept":"b","span":[1,2]}],)"
        R"("edges":[{"src":0,"dst":1,"rel":"ARG0"},{"src":1,"dst":0,"rel":"ARG1"}]})"
        "\n");
    CHECK_THROWS_AS(read_corpus_jsonl(in), ValidationError);
  }
}

TEST_CASE("JSONL round trip preserves graphs") {
  auto g = merge_entity_nodes(attack_report());
  std::ostringstream out;
  write_corpus_jsonl({g, attack_report()}, out);
  std::istringstream in(out.str());
  auto back = read_corpus_jsonl(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == g);
  CHECK(back[1] == attack_report());
}

TEST_CASE("read_penman") {
  SUBCASE("alignment gives a single-token span") {
    auto g = read_penman("(a / attack~e.3)");
    REQUIRE(g.nodes.size() == 1);
    CHECK(g.nodes[0].concept_label == "attack");
    CHECK(g.nodes[0].span == TokenSpan{3, 4});
  }
  SUBCASE("nested node becomes an edge") {
    auto g = read_penman("(a / attack :ARG0 (s / soldier))");
    REQUIRE(g.nodes.size() == 2);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.node(g.edges[0].src).concept_label == "attack");
    CHECK(g.node(g.edges[0].dst).concept_label == "soldier");
    CHECK(g.edges[0].rel == "ARG0");
  }
  SUBCASE("inverse relation is flipped") {
    auto g = read_penman("(a / attack :ARG0-of (r / report))");
    REQUIRE(g.edges.size() == 1);
    CHECK(g.node(g.edges[0].src).concept_label == "report");
    CHECK(g.node(g.edges[0].dst).concept_label == "attack");
    CHECK(g.edges[0].rel == "ARG0");
  }
  SUBCASE("re-entrant variable and string constant") {
    auto g = read_penman(R"((w / want-01 :ARG0 (b / boy) :ARG1 (g / go-01 :ARG0 b) :name (n / name :op1 "Bo")))");
    CHECK(g.nodes.size() == 5);
    CHECK(g.edges.size() == 5);
  }
  SUBCASE("errors carry offsets") {
    CHECK_THROWS_AS(read_penman(""), ParseError);
    CHECK_THROWS_AS(read_penman("(a / attack"), ParseError);
    CHECK_THROWS_AS(read_penman("(a / attack :ARG0 (a / again))"), ParseError);
    try {
      read_penman("(a / attack))");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.location() >= 11);
    }
  }
  SUBCASE("document with token comments") {
    std::istringstream in("# ::tok the soldier attacked\n(a / attack-01~e.2 :ARG0 (s / soldier~e.1))\n\n"
                          "# ::snt ignored\n(b / bomb-01)\n");
    auto docs = read_penman_document(in);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].tokens == std::vector<std::string>{"the", "soldier", "attacked"});
    CHECK(docs[1].nodes.size() == 1);
  }
}

TEST_CASE("PENMAN to JSONL round trip keeps node and edge multisets") {
  auto g = read_penman(R"((r / report-01~e.3 :ARG0 (p / person :name (n / name :op1 "Kelly"~e.1 :op2 "Wallace"~e.2))
      :ARG1 (a / attack-01~e.5 :time (t / today~e.4) :location (c / city~e.7))))");
  std::ostringstream out;
  write_corpus_jsonl({g}, out);
  std::istringstream in(out.str());
  auto back = read_corpus_jsonl(in);
  REQUIRE(back.size() == 1);
  CHECK(concept_multiset(back[0]) == concept_multiset(g));
  CHECK(edge_multiset(back[0]) == edge_multiset(g));
}

TEST_CASE("merge_entity_nodes") {
  SUBCASE("name chain collapses to one node") {
    // person -name-> n -op1-> Kelly, n -op2-> Wallace; spans [0,1), [1,2), [2,3).
    AmrGraph g;
    g.tokens = {"CNN's", "Kelly", "Wallace"};
    g.nodes = {{0, "person", std::nullopt, {}}, {1, "name", TokenSpan{0, 1}, {}}, {2, "Kelly", TokenSpan{1, 2}, {}},
               {3, "Wallace", TokenSpan{2, 3}, {}}};
    g.edges = {{0, 1, "name"}, {1, 2, "op1"}, {1, 3, "op2"}};
    auto m = merge_entity_nodes(g);
    REQUIRE(m.nodes.size() == 1);
    CHECK(m.nodes[0].concept_label == "person");
    CHECK(m.nodes[0].span == TokenSpan{0, 3});
    CHECK(m.nodes[0].merged_from.size() == 3);
    CHECK(m.edges.empty());
  }
  SUBCASE("graph without entity links is unchanged") {
    auto g = testutil::make_graph(3, {{0, 1, "ARG0"}, {0, 2, "ARG1"}});
    CHECK(merge_entity_nodes(g) == g);
  }
  SUBCASE("two disjoint chains") {
    auto g = testutil::make_graph(6, {{0, 1, "ARG0"}, {0, 3, "ARG1"}, {1, 2, "name"}, {3, 4, "name"}, {4, 5, "op1"}});
    auto m = merge_entity_nodes(g);
    CHECK(m.nodes.size() == 3);
    CHECK(m.node(1).merged_from == std::vector<int>{2});
    CHECK(m.node(3).merged_from == std::vector<int>{4, 5});
    CHECK(m.node(3).span == TokenSpan{3, 6});
    CHECK(m.node(0).merged_from.empty());
    CHECK(m.edges == std::vector<AmrEdge>{{0, 1, "ARG0"}, {0, 3, "ARG1"}});
  }
  SUBCASE("figure sentence: no entity edges remain and edges re-target") {
    auto m = merge_entity_nodes(attack_report());
    for (const auto& e : m.edges) CHECK_FALSE(is_entity_link(e.rel));
    CHECK(m.node(1).span == TokenSpan{1, 3});
    CHECK(has_core_edge(m, 0, 1));
  }
  SUBCASE("self loop created by merging is dropped with a warning") {
    auto g = testutil::make_graph(2, {{0, 1, "name"}, {0, 1, "mod"}});
    std::vector<std::string> warnings;
    auto m = merge_entity_nodes(g, &warnings);
    CHECK(m.nodes.size() == 1);
    CHECK(m.edges.empty());
    CHECK(warnings.size() == 1);
  }
}

TEST_CASE("merge_entity_nodes is idempotent and keeps graphs valid") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> rels{"ARG0", "name", "op1", "op2", "mod", "time"};
  for (int trial = 0; trial < 300; ++trial) {
    auto g = testutil::random_dag(rng, 12, 0.25);
    std::uniform_int_distribution<std::size_t> r(0, rels.size() - 1);
    for (auto& e : g.edges) e.rel = rels[r(rng)];
    auto once = merge_entity_nodes(g);
    CHECK_NOTHROW(validate(once));
    for (const auto& e : once.edges) CHECK_FALSE(is_entity_link(e.rel));
    CHECK(merge_entity_nodes(once) == once);
  }
}

TEST_CASE("positive_pairs") {
  SUBCASE("figure fragment") {
    auto g = testutil::make_graph(3, {{0, 1, "time"}, {0, 2, "location"}});
    CHECK(positive_pairs(g).positives == std::vector<NodePair>{{0, 1}, {0, 2}});
  }
  SUBCASE("op edges only") {
    auto g = testutil::make_graph(3, {{0, 1, "op1"}, {0, 2, "op2"}});
    CHECK(positive_pairs(g).positives.empty());
  }
  SUBCASE("duplicate relations collapse") {
    auto g = testutil::make_graph(2, {{0, 1, "ARG0"}, {0, 1, "ARG1"}});
    CHECK(positive_pairs(g).positives == std::vector<NodePair>{{0, 1}});
  }
  SUBCASE("pairs are core edges of the graph") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      auto g = testutil::random_dag(rng, 15);
      for (auto [t, a] : positive_pairs(g).positives) CHECK(has_core_edge(g, t, a));
    }
  }
}

TEST_CASE("sample_negatives") {
  SUBCASE("figure scenario") {
    auto g = merge_entity_nodes(attack_report());
    std::mt19937_64 rng(1);
    auto negs = sample_negatives(g, {5, 7}, 9, 30, rng);
    bool reports = false, today = false;
    for (const auto& n : negs) {
      if (n.replaced != Replaced::kArgument) continue;
      reports |= n.pair.second == 0;
      today |= n.pair.second == 6;
    }
    CHECK(reports);
    CHECK_FALSE(today);
  }
  SUBCASE("two-node graph has no candidates") {
    auto g = testutil::make_graph(2, {{0, 1, "ARG0"}});
    std::mt19937_64 rng(1);
    CHECK(sample_negatives(g, {0, 1}, 9, 30, rng).empty());
  }
  SUBCASE("deterministic for a seed") {
    auto g = merge_entity_nodes(attack_report());
    std::mt19937_64 a(7), b(7);
    CHECK(sample_negatives(g, {0, 5}, 2, 3, a) == sample_negatives(g, {0, 5}, 2, 3, b));
  }
  SUBCASE("property: validity, counts and no replacement") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
      auto g = testutil::random_dag(rng, 20, 0.3);
      for (auto [t, a] : positive_pairs(g).positives) {
        auto negs = sample_negatives(g, {t, a}, 3, 4, rng);
        int nt = 0, na = 0;
        std::set<NodePair> seen;
        for (const auto& n : negs) {
          CHECK(seen.insert(n.pair).second);
          if (n.replaced == Replaced::kTrigger) {
            ++nt;
            CHECK(n.pair.second == a);
            CHECK_FALSE(has_core_edge(g, n.pair.first, a));
          } else {
            ++na;
            CHECK(n.pair.first == t);
            CHECK_FALSE(has_core_edge(g, t, n.pair.second));
          }
        }
        CHECK(nt <= 3);
        CHECK(na <= 4);
      }
    }
  }
}

TEST_CASE("identify_candidates") {
  SUBCASE("both events of the figure sentence are triggers") {
    auto g = merge_entity_nodes(attack_report());
    auto c = identify_candidates(g);
    CHECK(c.triggers == std::vector<int>{0, 5});
  }
  SUBCASE("edgeless graph") {
    auto c = identify_candidates(testutil::make_graph(3, {}));
    CHECK(c.triggers.empty());
    CHECK(c.arguments.empty());
  }
  SUBCASE("chain") {
    auto c = identify_candidates(testutil::make_graph(3, {{0, 1, "ARG0"}, {1, 2, "ARG1"}}));
    CHECK(c.triggers == std::vector<int>{0, 1});
    CHECK(c.arguments == std::vector<int>{1, 2});
  }
}

TEST_CASE("node_text joins span tokens") {
  auto m = merge_entity_nodes(attack_report());
  CHECK(node_text(m, 1) == "Kelly Wallace");
  CHECK(node_text(m, 5) == "attack");
}
