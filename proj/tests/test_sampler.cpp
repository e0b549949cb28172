#include <queue>
#include <set>

#include "cleve/errors.hpp"
#include "cleve/subgraph_sampler.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace cleve;

namespace {

bool connected(const AmrGraph& g, const std::set<int>& nodes) {
  if (nodes.empty()) return false;
  std::set<int> seen{*nodes.begin()};
  std::queue<int> q;
  q.push(*nodes.begin());
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const auto& e : g.edges) {
      int other = -1;
      if (e.src == u) other = e.dst;
      if (e.dst == u) other = e.src;
      if (other >= 0 && nodes.count(other) && seen.insert(other).second) q.push(other);
    }
  }
  return seen == nodes;
}

Matrix id_features(const AmrGraph& g) {
  Matrix f(static_cast<Eigen::Index>(g.nodes.size()), 2);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) f.row(static_cast<Eigen::Index>(i)) << g.nodes[i].id, -g.nodes[i].id;
  return f;
}

}  // namespace

TEST_CASE("pick_ego") {
  std::mt19937_64 rng(1);
  auto g = testutil::make_graph(3, {{0, 1, "ARG0"}, {0, 2, "ARG1"}});
  for (int i = 0; i < 20; ++i) CHECK(pick_ego(g, rng) == 0);

  auto two = testutil::make_graph(3, {{0, 2, "ARG0"}, {1, 2, "ARG1"}});
  std::mt19937_64 a(5), b(5);
  CHECK(pick_ego(two, a) == pick_ego(two, b));
  std::set<int> seen;
  for (int i = 0; i < 100; ++i) seen.insert(pick_ego(two, a));
  CHECK(seen == std::set<int>{0, 1});

  auto cyc = testutil::make_graph(2, {{0, 1, "ARG0"}, {1, 0, "ARG1"}});
  CHECK_THROWS_AS(pick_ego(cyc, rng), ValidationError);
  CHECK_THROWS_AS(pick_ego(AmrGraph{}, rng), ValidationError);
}

TEST_CASE("rwr examples") {
  std::mt19937_64 rng(2);
  CHECK(rwr(testutil::make_graph(1, {}), 0, 0.8, 128, rng) == std::set<int>{0});
  auto path = testutil::make_graph(2, {{0, 1, "ARG0"}});
  CHECK(rwr(path, 0, 0.0, 128, rng) == std::set<int>{0, 1});
  // Long path, no restarts: the walk moves one way until it reaches a leaf
  // or turns back onto a visited node, where it stops.
  auto longpath = testutil::make_graph(6, {{0, 1, "ARG0"}, {1, 2, "ARG0"}, {2, 3, "ARG0"}, {3, 4, "ARG0"}, {4, 5, "ARG0"}});
  for (int i = 0; i < 20; ++i) {
    auto s = rwr(longpath, 0, 0.0, 128, rng);
    CHECK(s.count(0));
    CHECK(s.count(1));
  }
  // max_steps = 0 returns the ego alone.
  CHECK(rwr(longpath, 2, 0.5, 0, rng) == std::set<int>{2});
}

TEST_CASE("rwr properties over random DAGs") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = testutil::random_dag(rng, 14, 0.25);
    const int ego = pick_ego(g, rng);
    const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const int max_steps = static_cast<int>(rng() % 20);
    auto s = rwr(g, ego, p, max_steps, rng);
    CHECK(s.count(ego) == 1);
    CHECK(connected(g, s));
    // Each step adds at most one node.
    CHECK(static_cast<int>(s.size()) <= max_steps + 1);
  }
}

TEST_CASE("induce") {
  auto g = testutil::make_graph(4, {{0, 1, "ARG0"}, {0, 2, "ARG1"}, {2, 3, "mod"}});
  auto full = induce(g, {0, 1, 2, 3});
  CHECK(full.edges.size() == 3);
  CHECK(full.nodes == std::vector<int>{0, 1, 2, 3});
  CHECK(induce(g, {0, 1}).edges == std::vector<AmrEdge>{{0, 1, "ARG0"}});
  CHECK(induce(g, {1, 3}).edges.empty());
  CHECK_THROWS_AS(induce(g, {0, 9}), ValidationError);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = testutil::random_dag(rng, 12, 0.3);
    auto s = rwr(r, pick_ego(r, rng), 0.5, 128, rng);
    std::vector<AmrEdge> expect;
    for (const auto& e : r.edges)
      if (s.count(e.src) && s.count(e.dst)) expect.push_back(e);
    auto sub = induce(r, s);
    auto got = sub.edges;
    std::sort(got.begin(), got.end());
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
    CHECK(std::set<int>(sub.nodes.begin(), sub.nodes.end()) == s);
  }
}

TEST_CASE("anonymize") {
  std::mt19937_64 rng(6);
  SUBCASE("single node maps to 0") {
    auto g = testutil::make_graph(1, {});
    auto s = anonymize(g, induce(g, {0}), Matrix(), rng);
    CHECK(s.id_map == std::vector<std::pair<int, int>>{{0, 0}});
  }
  SUBCASE("fixed seed is deterministic") {
    auto g = testutil::make_graph(5, {{0, 1, "ARG0"}, {1, 2, "ARG1"}, {0, 3, "mod"}, {3, 4, "ARG0"}});
    std::mt19937_64 a(11), b(11);
    auto sa = anonymize(g, induce(g, {0, 1, 2, 3, 4}), Matrix(), a);
    auto sb = anonymize(g, induce(g, {0, 1, 2, 3, 4}), Matrix(), b);
    CHECK(sa.id_map == sb.id_map);
    CHECK(sa.edges == sb.edges);
  }
  SUBCASE("edges follow the permutation") {
    auto g = testutil::make_graph(2, {{0, 1, "ARG0"}});
    bool saw_swap = false;
    for (int i = 0; i < 50; ++i) {
      auto s = anonymize(g, induce(g, {0, 1}), Matrix(), rng);
      REQUIRE(s.edges.size() == 1);
      CHECK(s.edges[0].src == s.anonymized(0));
      CHECK(s.edges[0].dst == s.anonymized(1));
      saw_swap |= s.anonymized(0) == 1;
    }
    CHECK(saw_swap);
  }
  SUBCASE("isomorphism class and features are preserved") {
    for (int trial = 0; trial < 200; ++trial) {
      auto g = testutil::random_dag(rng, 12, 0.3);
      // Renumber ids away from positions so the two are not confused.
      for (auto& n : g.nodes) n.id = 100 + 3 * n.id;
      for (auto& e : g.edges) {
        e.src = 100 + 3 * e.src;
        e.dst = 100 + 3 * e.dst;
      }
      auto s = sample_subgraph(g, id_features(g), SamplerConfig{}, rng);
      auto sub = induce(g, [&] {
        std::set<int> ids;
        for (auto [orig, anon] : s.id_map) ids.insert(orig);
        return ids;
      }());
      // Relabel the induced subgraph to positions in its node list.
      std::vector<AmrEdge> local;
      auto pos = [&](int id) {
        return static_cast<int>(std::find(sub.nodes.begin(), sub.nodes.end(), id) - sub.nodes.begin());
      };
      for (const auto& e : sub.edges) local.push_back({pos(e.src), pos(e.dst), e.rel});
      CHECK(oracle::wl_hash(s.num_nodes(), s.edges) == oracle::wl_hash(static_cast<int>(sub.nodes.size()), local));

      std::set<int> anon_ids;
      for (auto [orig, anon] : s.id_map) {
        anon_ids.insert(anon);
        CHECK(s.features(anon, 0) == orig);
      }
      CHECK(static_cast<int>(anon_ids.size()) == s.num_nodes());
      CHECK(*anon_ids.begin() == 0);
      CHECK(*anon_ids.rbegin() == s.num_nodes() - 1);
      CHECK(s.anonymized(s.ego) >= 0);
    }
  }
}

TEST_CASE("wl_hash oracle separates simple non-isomorphic graphs") {
  CHECK(oracle::wl_hash(3, {{0, 1, "ARG0"}, {1, 2, "ARG0"}}) != oracle::wl_hash(3, {{0, 1, "ARG0"}, {0, 2, "ARG0"}}));
  CHECK(oracle::wl_hash(2, {{0, 1, "ARG0"}}) != oracle::wl_hash(2, {{0, 1, "ARG1"}}));
  CHECK(oracle::wl_hash(3, {{0, 1, "ARG0"}, {1, 2, "mod"}}) == oracle::wl_hash(3, {{2, 0, "ARG0"}, {0, 1, "mod"}}));
}

TEST_CASE("sample_positive_pair") {
  std::mt19937_64 rng(7);
  auto one = testutil::make_graph(1, {});
  auto [a, b] = sample_positive_pair(one, Matrix(), SamplerConfig{}, rng);
  CHECK(a.num_nodes() == 1);
  CHECK(b.num_nodes() == 1);
  CHECK(a.edges.empty());

  for (int trial = 0; trial < 100; ++trial) {
    auto g = testutil::random_dag(rng, 10, 0.3);
    auto [x, y] = sample_positive_pair(g, Matrix(), SamplerConfig{}, rng);
    for (const auto* s : {&x, &y}) {
      std::set<int> ids;
      for (auto [orig, anon] : s->id_map) ids.insert(orig);
      CHECK(ids.count(s->ego));
      CHECK(connected(g, ids));
      CHECK(g.roots().end() != std::find(g.roots().begin(), g.roots().end(), s->ego));
    }
  }
  auto g = testutil::make_graph(5, {{0, 1, "ARG0"}, {1, 2, "ARG1"}, {3, 4, "ARG0"}, {3, 2, "mod"}});
  std::mt19937_64 r1(9), r2(9);
  auto p1 = sample_positive_pair(g, Matrix(), SamplerConfig{}, r1);
  auto p2 = sample_positive_pair(g, Matrix(), SamplerConfig{}, r2);
  CHECK(p1.first.id_map == p2.first.id_map);
  CHECK(p1.second.edges == p2.second.edges);
}
