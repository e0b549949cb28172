#include <set>

#include "cleve/synthetic.hpp"
#include "doctest.h"

using namespace cleve;

TEST_CASE("synthetic corpus") {
  SyntheticConfig cfg;
  cfg.sentences = 120;
  auto c = generate_corpus(cfg);
  REQUIRE(c.graphs.size() == 120);

  SUBCASE("graphs are valid and gold covers exactly the candidates") {
    std::size_t triggers = 0, arguments = 0;
    for (std::size_t s = 0; s < c.graphs.size(); ++s) {
      const auto& g = c.graphs[s];
      CHECK_NOTHROW(validate(g));
      auto cand = identify_candidates(g);
      triggers += cand.triggers.size();
      arguments += cand.arguments.size();
      for (int t : cand.triggers) CHECK(c.trigger_gold.count(std::to_string(s) + ":" + std::to_string(t)));
      for (int a : cand.arguments) CHECK(c.argument_gold.count(std::to_string(s) + ":" + std::to_string(a)));
    }
    CHECK(triggers == c.trigger_gold.size());
    CHECK(arguments == c.argument_gold.size());
  }
  SUBCASE("class counts follow the config") {
    std::set<std::string> tc, ac;
    for (const auto& [id, cls] : c.trigger_gold) tc.insert(cls);
    for (const auto& [id, cls] : c.argument_gold) ac.insert(cls);
    CHECK(tc.size() == 4);
    CHECK(ac.size() == 3);
  }
  SUBCASE("deterministic per seed") {
    auto again = generate_corpus(cfg);
    CHECK(again.graphs == c.graphs);
    cfg.seed = 8;
    CHECK(generate_corpus(cfg).graphs != c.graphs);
  }
  SUBCASE("supervised instances carry their graphs and labels") {
    auto xs = supervised_instances(c);
    CHECK(xs.size() == c.trigger_gold.size());
    for (const auto& x : xs) {
      REQUIRE(x.graph.has_value());
      CHECK(x.trigger.end <= static_cast<int>(x.tokens.size()));
      CHECK_FALSE(x.label.empty());
    }
  }
}
