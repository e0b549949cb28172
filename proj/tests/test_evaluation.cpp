#include "cleve/errors.hpp"
#include "cleve/evaluation.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace cleve;

namespace {

std::vector<int> random_partition(std::mt19937_64& rng, std::size_t n, int max_k) {
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(rng() % static_cast<std::uint64_t>(max_k));
  return v;
}

std::vector<std::string> as_gold(const std::vector<int>& v) {
  std::vector<std::string> out;
  for (int x : v) out.push_back("g" + std::to_string(x));
  return out;
}

}  // namespace

TEST_CASE("b_cubed examples") {
  auto perfect = b_cubed_exact({0, 0, 1}, {"x", "x", "y"});
  CHECK(perfect.precision == 1);
  CHECK(perfect.recall == 1);
  CHECK(perfect.f1 == 1);

  auto merged = b_cubed_exact({0, 0, 0}, {"a", "a", "c"});
  CHECK(merged.precision == Rational(5, 9));
  CHECK(merged.recall == 1);
  CHECK(merged.f1 == Rational(5, 7));

  auto split = b_cubed_exact({0, 1, 2, 3}, {"k", "k", "k", "k"});
  CHECK(split.precision == 1);
  CHECK(split.recall == Rational(1, 4));
  CHECK(split.f1 == Rational(2, 5));

  auto m = b_cubed({0, 0, 0}, {"a", "a", "c"});
  CHECK(m.precision == doctest::Approx(5.0 / 9.0).epsilon(1e-15));
  CHECK(m.f1 == doctest::Approx(5.0 / 7.0).epsilon(1e-15));
  CHECK(m.n_items == 3);
}

TEST_CASE("b_cubed errors and keyed form") {
  CHECK_THROWS_AS(b_cubed(std::vector<int>{}, std::vector<std::string>{}), DataError);
  CHECK_THROWS_AS(b_cubed(std::vector<int>{0, 1}, std::vector<std::string>{"a"}), DataError);
  std::map<std::string, int> pred{{"1:0", 0}, {"1:2", 0}, {"2:1", 1}};
  std::map<std::string, std::string> gold{{"1:0", "attack"}, {"1:2", "attack"}, {"2:1", "meet"}};
  CHECK(b_cubed(pred, gold).f1 == 1.0);
  gold.erase("2:1");
  gold["9:9"] = "meet";
  CHECK_THROWS_AS(b_cubed(pred, gold), DataError);
}

TEST_CASE("b_cubed equals the brute-force oracle exactly") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    auto pred = random_partition(rng, n, 1 + static_cast<int>(rng() % 5));
    auto gold = as_gold(random_partition(rng, n, 1 + static_cast<int>(rng() % 5)));
    auto got = b_cubed_exact(pred, gold);
    auto want = oracle::b_cubed(pred, gold);
    CHECK(got.precision == want.p);
    CHECK(got.recall == want.r);
    CHECK(got.f1 == want.f1);
    CHECK(got.precision >= 0);
    CHECK(got.precision <= 1);
    CHECK(got.recall <= 1);
    CHECK(got.f1 <= 1);
  }
}

TEST_CASE("b_cubed refinement, merging and relabeling") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 11;
    auto pred = random_partition(rng, n, 4);
    auto gold = as_gold(random_partition(rng, n, 4));
    const auto base = b_cubed_exact(pred, gold);

    // Split: move some members of one cluster into a fresh cluster.
    auto finer = pred;
    for (auto& x : finer)
      if (x == pred[0] && rng() % 2) x = 100;
    CHECK(b_cubed_exact(finer, gold).precision >= base.precision);

    // Merge two clusters.
    auto coarser = pred;
    for (auto& x : coarser)
      if (x == 1) x = 0;
    CHECK(b_cubed_exact(coarser, gold).recall >= base.recall);

    // Relabel both sides.
    auto relabeled = pred;
    for (auto& x : relabeled) x = 7 - 3 * x;
    auto regold = gold;
    for (auto& g : regold) g = "renamed-" + g;
    auto again = b_cubed_exact(relabeled, regold);
    CHECK(again.precision == base.precision);
    CHECK(again.recall == base.recall);
  }
}

TEST_CASE("metrics_json has the fixed keys") {
  auto j = nlohmann::json::parse(metrics_json(b_cubed({0, 0, 0}, {"a", "a", "c"})));
  CHECK(j.size() == 4);
  CHECK(j.at("b3_precision").get<double>() == doctest::Approx(5.0 / 9.0));
  CHECK(j.at("b3_recall").get<double>() == 1.0);
  CHECK(j.at("b3_f1").get<double>() == doctest::Approx(5.0 / 7.0));
  CHECK(j.at("n_items").get<int>() == 3);
}
