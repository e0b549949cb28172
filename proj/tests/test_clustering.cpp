#include <cmath>

#include "cleve/clustering.hpp"
#include "cleve/errors.hpp"
#include "cleve/evaluation.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cleve;

namespace {

RowVector vec(std::initializer_list<double> xs) {
  RowVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

RowVector gaussian(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> nd;
  RowVector v(d);
  for (int i = 0; i < d; ++i) v(i) = nd(rng);
  return v;
}

const std::vector<std::string> kRels{"ARG0", "ARG1", "ARG2", "time", "location"};

// Random candidates on both sides with links pointing into the other side.
std::pair<std::vector<CandidateContext>, std::vector<CandidateContext>> random_contexts(std::mt19937_64& rng, int nt,
                                                                                         int na, int d) {
  std::vector<CandidateContext> t(static_cast<std::size_t>(nt)), a(static_cast<std::size_t>(na));
  for (auto& c : t) {
    c.owner = "trigger";
    c.semantic = gaussian(rng, d);
    c.structure = gaussian(rng, d);
    const int links = static_cast<int>(rng() % 3);
    for (int l = 0; l < links; ++l) {
      const std::string& r = kRels[rng() % kRels.size()];
      c.links.push_back({r, static_cast<int>(rng() % static_cast<std::uint64_t>(na))});
      c.relation_structure[r] = gaussian(rng, d);
    }
  }
  for (auto& c : a) {
    c.owner = "argument";
    c.semantic = gaussian(rng, d);
    const int links = static_cast<int>(rng() % 3);
    for (int l = 0; l < links; ++l)
      c.links.push_back({kRels[rng() % kRels.size()], static_cast<int>(rng() % static_cast<std::uint64_t>(nt))});
  }
  return {t, a};
}

ClusterAssignment random_assignment(std::mt19937_64& rng, int n) {
  const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
  ClusterAssignment c;
  c.k = k;
  for (int i = 0; i < n; ++i) c.labels.push_back(i < k ? i : static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
  return c;
}

// Oracle tuples: (owner, relation, cluster of the counterpart).
std::set<std::tuple<std::string, std::string, int>> tuples(const CandidateContext& c, const ClusterAssignment& other) {
  std::set<std::tuple<std::string, std::string, int>> s;
  for (const auto& l : c.links) s.emplace(c.owner, l.relation, other.labels[static_cast<std::size_t>(l.counterpart)]);
  return s;
}

double trigger_sim_oracle(const CandidateContext& x, const CandidateContext& y, double lambda,
                          const ClusterAssignment& args) {
  double shared = 0.0;
  int count = 0;
  for (const auto& [r, v] : x.relation_structure) {
    auto it = y.relation_structure.find(r);
    if (it == y.relation_structure.end()) continue;
    shared += oracle::cosine(v, it->second);
    ++count;
  }
  const double structural = count ? shared / count : 0.0;
  return lambda * oracle::cosine(x.semantic, y.semantic) + oracle::jaccard_log(tuples(x, args), tuples(y, args)) +
         (1.0 - lambda) * structural;
}

double argument_sim_oracle(const CandidateContext& x, const CandidateContext& y, const ClusterAssignment& trig) {
  return oracle::cosine(x.semantic, y.semantic) + oracle::jaccard_log(tuples(x, trig), tuples(y, trig));
}

// Block affinity: 1 inside blocks, 0 across, then shuffled.
std::pair<Matrix, std::vector<int>> blocks(std::mt19937_64& rng, int k) {
  std::vector<int> truth;
  for (int b = 0; b < k; ++b) {
    const int size = 2 + static_cast<int>(rng() % 5);
    for (int i = 0; i < size; ++i) truth.push_back(b);
  }
  std::shuffle(truth.begin(), truth.end(), rng);
  const auto n = static_cast<Eigen::Index>(truth.size());
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = truth[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(j)];
  return {a, truth};
}

bool same_partition(const std::vector<int>& x, const std::vector<int>& y) {
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if ((x[i] == x[j]) != (y[i] == y[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("constraint_f examples") {
  using S = std::set<ConstraintTuple>;
  const ConstraintTuple x{"trigger", "ARG0", 1}, y{"trigger", "ARG1", 0}, z{"trigger", "time", 2};
  CHECK(std::abs(constraint_f(S{x}, S{x}) - std::log(2.0)) < 1e-9);
  CHECK(constraint_f(S{x}, S{y}) == 0.0);
  CHECK(std::abs(constraint_f(S{x, y}, S{x, z}) - std::log(4.0 / 3.0)) < 1e-9);
  CHECK(constraint_f(S{}, S{}) == 0.0);
  CHECK(constraint_f(S{x}, S{}) == 0.0);
}

TEST_CASE("constraint_f properties") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::set<ConstraintTuple> a, b;
    for (int i = 0; i < static_cast<int>(rng() % 5); ++i) a.emplace("t", kRels[rng() % 3], static_cast<int>(rng() % 3));
    for (int i = 0; i < static_cast<int>(rng() % 5); ++i) b.emplace("t", kRels[rng() % 3], static_cast<int>(rng() % 3));
    const double f = constraint_f(a, b);
    CHECK(f == constraint_f(b, a));
    CHECK(f >= 0.0);
    CHECK(f <= std::log(2.0) + 1e-15);
    CHECK(f == doctest::Approx(oracle::jaccard_log(a, b)).epsilon(1e-14));
  }
}

TEST_CASE("similarity examples") {
  CandidateContext t;
  t.owner = "trigger";
  t.semantic = vec({1, 2, 3});
  t.links = {{"ARG0", 0}};
  t.relation_structure["ARG0"] = vec({0.5, -1, 2});
  const auto args = ClusterAssignment::singletons(1);
  CHECK(std::abs(trigger_similarity(t, t, 0.5, args) - (1.0 + std::log(2.0))) < 1e-9);

  CandidateContext u, v;
  u.owner = v.owner = "trigger";
  u.semantic = vec({1, 0});
  v.semantic = vec({0, 1});
  CHECK(trigger_similarity(u, v, 0.5, args) == 0.0);

  CandidateContext a1, a2;
  a1.owner = a2.owner = "argument";
  a1.semantic = vec({1, 0});
  a2.semantic = vec({0.5, std::sqrt(3.0) / 2.0});  // cosine 0.5
  CHECK(std::abs(argument_similarity(a1, a1, args) - 1.0) < 1e-12);  // no links, f = 0
  CHECK(std::abs(argument_similarity(a1, v, args) - 0.0) < 1e-12);
  // Jaccard 1/3 via two tuples each, one shared.
  ClusterAssignment trig{{0, 1, 2}, 3};
  a1.links = {{"ARG0", 0}, {"ARG1", 1}};
  a2.links = {{"ARG0", 0}, {"ARG1", 2}};
  CHECK(std::abs(argument_similarity(a1, a1, trig) - (1.0 + std::log(2.0))) < 1e-9);
  CHECK(std::abs(argument_similarity(a1, a2, trig) - (0.5 + std::log(4.0 / 3.0))) < 1e-9);

  SUBCASE("mixed case with two shared relations") {
    CandidateContext p, q;
    p.owner = q.owner = "trigger";
    p.semantic = vec({1, 1, 0});
    q.semantic = vec({1, 0, 1});
    p.links = {{"ARG0", 0}, {"ARG1", 1}, {"time", 2}};
    q.links = {{"ARG0", 1}, {"ARG1", 1}, {"location", 0}};
    p.relation_structure = {{"ARG0", vec({1, 0, 0})}, {"ARG1", vec({0, 1, 0})}, {"time", vec({1, 1, 1})}};
    q.relation_structure = {{"ARG0", vec({1, 1, 0})}, {"ARG1", vec({0, 1, 0})}, {"location", vec({0, 0, 1})}};
    ClusterAssignment ac{{0, 0, 1}, 2};
    // By hand: cos(E_g) = 1/2; tuples p = {(A0,0),(A1,0),(time,1)},
    // q = {(A0,0),(A1,0),(loc,0)} share 2 of 4; shared relations ARG0, ARG1
    // with cosines 1/sqrt 2 and 1.
    const double expect = 0.3 * 0.5 + std::log(1.5) + 0.7 * (1.0 / std::sqrt(2.0) + 1.0) / 2.0;
    CHECK(std::abs(trigger_similarity(p, q, 0.3, ac) - expect) < 1e-12);
    CHECK(std::abs(trigger_similarity(p, q, 0.3, ac) - trigger_sim_oracle(p, q, 0.3, ac)) < 1e-12);
    // Without structure only the semantic and constraint terms remain.
    CHECK(std::abs(trigger_similarity(p, q, 0.3, ac, false) - (0.5 + std::log(1.5))) < 1e-12);
  }
}

TEST_CASE("similarities are symmetric and scale invariant") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto [t, a] = random_contexts(rng, 5, 5, 4);
    auto ac = random_assignment(rng, 5), tc = random_assignment(rng, 5);
    const double s = trigger_similarity(t[0], t[1], 0.5, ac);
    CHECK(s == doctest::Approx(trigger_similarity(t[1], t[0], 0.5, ac)).epsilon(1e-14));
    CHECK(argument_similarity(a[0], a[1], tc) == doctest::Approx(argument_similarity(a[1], a[0], tc)).epsilon(1e-14));
    CHECK(s == doctest::Approx(trigger_sim_oracle(t[0], t[1], 0.5, ac)).epsilon(1e-12));
    auto t0 = t[0], t1 = t[1];
    t0.semantic *= 3.5;
    t1.semantic *= 0.25;
    CHECK(trigger_similarity(t0, t1, 0.5, ac) == doctest::Approx(s).epsilon(1e-12));
  }
  CHECK_THROWS_AS(cosine(vec({1, 2}), vec({1, 2, 3})), std::invalid_argument);
  CHECK(cosine(vec({0, 0}), vec({1, 2})) == 0.0);
}

TEST_CASE("objective_O matches the brute-force double loop") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int nt = 1 + static_cast<int>(rng() % 12), na = 1 + static_cast<int>(rng() % 12);
    auto [t, a] = random_contexts(rng, nt, na, 3);
    auto tc = random_assignment(rng, nt), ac = random_assignment(rng, na);
    const bool structure = rng() % 2;
    const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
    const double expect =
        oracle::pair_objective(t.size(), tc.labels,
                               [&](std::size_t u, std::size_t v) {
                                 return structure ? trigger_sim_oracle(t[u], t[v], lambda, ac)
                                                  : oracle::cosine(t[u].semantic, t[v].semantic) +
                                                        oracle::jaccard_log(tuples(t[u], ac), tuples(t[v], ac));
                               }) +
        oracle::pair_objective(a.size(), ac.labels,
                               [&](std::size_t u, std::size_t v) { return argument_sim_oracle(a[u], a[v], tc); });
    CHECK(std::abs(objective_O(tc, ac, t, a, lambda, structure) - expect) <= 1e-9);
    JointSimilarity js(t, a, lambda, structure);
    CHECK(std::abs(js.objective(tc, ac) - expect) <= 1e-9);
    JointSimilarity serial(t, a, lambda, structure, Exec::kSerial);
    CHECK(serial.trigger_matrix(ac) == js.trigger_matrix(ac));
  }
}

TEST_CASE("objective_O degenerate clusterings") {
  std::mt19937_64 rng(4);
  auto [t, a] = random_contexts(rng, 4, 4, 3);
  Matrix s = JointSimilarity(t, a, 0.5, true).trigger_matrix(ClusterAssignment::singletons(4));
  double cross = 0.0, intra = 0.0;
  for (int u = 0; u < 4; ++u)
    for (int v = u + 1; v < 4; ++v) {
      cross += s(u, v);
      intra += 1.0 - s(u, v);
    }
  CHECK(pair_objective(s, ClusterAssignment::singletons(4)) == doctest::Approx(cross).epsilon(1e-14));
  CHECK(pair_objective(s, ClusterAssignment{{0, 0, 0, 0}, 1}) == doctest::Approx(intra).epsilon(1e-14));
}

TEST_CASE("spectral_cluster") {
  std::mt19937_64 rng(5);
  SUBCASE("block-diagonal affinities are recovered exactly") {
    for (int k = 2; k <= 4; ++k)
      for (int trial = 0; trial < 20; ++trial) {
        auto [a, truth] = blocks(rng, k);
        auto c = spectral_cluster(a, k, rng());
        CHECK(c.k == k);
        CHECK(same_partition(c.labels, truth));
      }
  }
  SUBCASE("two blocks agree with the brute-force best bipartition") {
    auto [a, truth] = blocks(rng, 2);
    const int n = static_cast<int>(truth.size());
    REQUIRE(n <= 14);
    double best = -1;
    std::vector<int> best_split;
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
      double within = 0;
      std::vector<int> lab(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) lab[static_cast<std::size_t>(i)] = (mask >> i) & 1;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j && lab[static_cast<std::size_t>(i)] == lab[static_cast<std::size_t>(j)]) within += a(i, j);
      if (within > best) {
        best = within;
        best_split = lab;
      }
    }
    CHECK(same_partition(spectral_cluster(a, 2, 1).labels, best_split));
  }
  SUBCASE("K = n gives singletons, K = 1 one cluster") {
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 8);
      Matrix m(n, n);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
      auto all = spectral_cluster(m, n, rng());
      CHECK(std::set<int>(all.labels.begin(), all.labels.end()).size() == static_cast<std::size_t>(n));
      auto one = spectral_cluster(m, 1, rng());
      CHECK(one.labels == std::vector<int>(static_cast<std::size_t>(n), 0));
    }
  }
  SUBCASE("labels are renumbered by first appearance and clusters are non-empty") {
    std::uniform_real_distribution<double> u(-0.2, 1);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 3 + static_cast<int>(rng() % 10);
      Matrix m(n, n);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
      const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
      auto c = spectral_cluster(m, k, rng());
      int next = 0;
      for (int l : c.labels) {
        CHECK(l <= next);
        if (l == next) ++next;
      }
      CHECK(next == k);
    }
  }
  SUBCASE("scaling cosine inputs leaves the clustering unchanged") {
    std::vector<RowVector> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(gaussian(rng, 3));
    auto sim = [&](double c) {
      Matrix m(10, 10);
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) m(i, j) = cosine(c * xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)] * c);
      return m;
    };
    CHECK(spectral_cluster(sim(1.0), 3, 7) == spectral_cluster(sim(4.0), 3, 7));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(spectral_cluster(Matrix::Ones(3, 3), 4, 1), ConfigError);
    CHECK_THROWS_AS(spectral_cluster(Matrix::Ones(3, 3), 0, 1), ConfigError);
    Matrix bad = Matrix::Ones(3, 3);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(spectral_cluster(bad, 2, 1), NumericError);
  }
}

TEST_CASE("joint_cluster") {
  // Two trigger groups with distinct directions, each linked to its own
  // argument group, which also has its own direction.
  std::vector<CandidateContext> t, a;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 0.05);
  auto around = [&](RowVector base) {
    for (Eigen::Index i = 0; i < base.size(); ++i) base(i) += noise(rng);
    return base;
  };
  std::vector<std::string> tgold, agold;
  for (int i = 0; i < 8; ++i) {
    const int g = i % 2;
    CandidateContext c;
    c.owner = "trigger";
    c.semantic = around(g ? vec({0, 1, 0, 0}) : vec({1, 0, 0, 0}));
    c.links = {{g ? "ARG1" : "ARG0", i}};
    c.relation_structure[c.links[0].relation] = around(g ? vec({0, 0, 0, 1}) : vec({0, 0, 1, 0}));
    c.structure = c.relation_structure.begin()->second;
    t.push_back(c);
    tgold.push_back(std::to_string(g));
    CandidateContext d;
    d.owner = "argument";
    d.semantic = around(g ? vec({0, 0, 1, 1}) : vec({1, 1, 0, 0}));
    d.links = {{g ? "ARG1" : "ARG0", i}};
    a.push_back(d);
    agold.push_back(std::to_string(g));
  }
  ClusteringConfig cfg;
  auto r = joint_cluster(t, a, cfg);
  CHECK(b_cubed(r.triggers.labels, tgold).f1 == 1.0);
  CHECK(b_cubed(r.arguments.labels, agold).f1 == 1.0);
  CHECK(r.kt == 2);
  CHECK(r.ka == 2);
  REQUIRE_FALSE(r.evaluated.empty());
  for (double o : r.evaluated) CHECK(r.objective <= o);
  CHECK(r.objective == doctest::Approx(objective_O(r.triggers, r.arguments, t, a, cfg.lambda)).epsilon(1e-12));

  auto again = joint_cluster(t, a, cfg);
  CHECK(again.triggers == r.triggers);
  CHECK(again.arguments == r.arguments);
  CHECK(again.evaluated == r.evaluated);

  cfg.kt_min = 1;
  cfg.kt_max = 3;
  cfg.ka_min = 1;
  cfg.ka_max = 3;
  auto grid = joint_cluster(t, a, cfg);
  for (double o : grid.evaluated) CHECK(grid.objective <= o);
  cfg.exec = Exec::kSerial;
  auto serial = joint_cluster(t, a, cfg);
  CHECK(serial.evaluated == grid.evaluated);
  CHECK(serial.triggers == grid.triggers);

  CHECK_THROWS(joint_cluster({}, a, ClusteringConfig{}));
  CHECK_THROWS(joint_cluster(t, {}, ClusteringConfig{}));
}
