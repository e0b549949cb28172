#include <cstdio>
#include <filesystem>

#include "cleve/errors.hpp"
#include "cleve/text_encoder.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace cleve;

namespace {

EncoderConfig tiny() {
  EncoderConfig c;
  c.layers = 2;
  c.dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.max_len = 32;
  return c;
}

Vocabulary words(const std::vector<std::string>& extra = {}) {
  Vocabulary v;
  for (const char* w : {"the", "attack", "soldier", "city", "in", "a", "b", "c", "."}) v.add(w);
  for (const auto& w : extra) v.add(w);
  return v;
}

}  // namespace

TEST_CASE("insert_markers") {
  SUBCASE("single span") {
    auto m = insert_markers({"the", "attack"}, {{1, 2}});
    CHECK(m.tokens == std::vector<std::string>{"the", "[E1]", "attack", "[/E1]"});
    CHECK(m.markers[0].open == 1);
    CHECK(m.markers[0].close == 3);
  }
  SUBCASE("no spans is the identity") {
    CHECK(insert_markers({"a", "b"}, {}).tokens == std::vector<std::string>{"a", "b"});
  }
  SUBCASE("two spans") {
    auto m = insert_markers({"a", "b", "c"}, {{0, 1}, {2, 3}});
    CHECK(m.tokens == std::vector<std::string>{"[E1]", "a", "[/E1]", "b", "[E2]", "c", "[/E2]"});
  }
  SUBCASE("numbering follows span start, not input order") {
    auto m = insert_markers({"a", "b", "c"}, {{2, 3}, {0, 1}});
    CHECK(m.tokens == std::vector<std::string>{"[E1]", "a", "[/E1]", "b", "[E2]", "c", "[/E2]"});
    CHECK(m.markers[0].open == 4);
    CHECK(m.markers[1].open == 0);
  }
  SUBCASE("adjacent spans") {
    auto m = insert_markers({"a", "b"}, {{0, 1}, {1, 2}});
    CHECK(m.tokens == std::vector<std::string>{"[E1]", "a", "[/E1]", "[E2]", "b", "[/E2]"});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(insert_markers({"a", "b"}, {{0, 2}, {1, 2}}), ValidationError);
    CHECK_THROWS_AS(insert_markers({"a", "b"}, {{1, 3}}), ValidationError);
    std::vector<std::string> many(20, "a");
    std::vector<TokenSpan> spans;
    for (int i = 0; i < 17; ++i) spans.push_back({i, i + 1});
    CHECK_THROWS_AS(insert_markers(many, spans), ValidationError);
  }
}

TEST_CASE("insert_markers: permuting span order keeps what each marker brackets") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 12;
    std::vector<std::string> toks;
    for (int i = 0; i < n; ++i) toks.push_back("t" + std::to_string(i));
    std::vector<TokenSpan> spans;
    for (int i = 0; i < n;) {
      int len = 1 + static_cast<int>(rng() % 2);
      if (i + len > n) break;
      if (rng() % 2) spans.push_back({i, i + len});
      i += len + static_cast<int>(rng() % 2);
    }
    auto base = insert_markers(toks, spans);
    auto perm = spans;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = insert_markers(toks, perm);
    CHECK(base.tokens == shuffled.tokens);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const auto& mk = shuffled.markers[i];
      // The first token after the open marker is the span's first token.
      CHECK(shuffled.tokens[static_cast<std::size_t>(mk.open + 1)] == toks[static_cast<std::size_t>(perm[i].start)]);
      CHECK(mk.close - mk.open - 1 == perm[i].length());
    }
  }
}

TEST_CASE("truncation drops split marker pairs whole") {
  auto m = insert_markers({"a", "b", "c", "d"}, {{0, 1}, {2, 4}});
  // [E1] a [/E1] b [E2] c d [/E2]
  auto t = truncate_marked(m, 6);
  CHECK(t.tokens == std::vector<std::string>{"[E1]", "a", "[/E1]", "b", "c", "d"});
  REQUIRE(t.markers[0].has_value());
  CHECK_FALSE(t.markers[1].has_value());
  auto untouched = truncate_marked(m, 64);
  CHECK(untouched.tokens == m.tokens);
}

TEST_CASE("encode") {
  TextEncoder enc(tiny(), words(), 1);
  auto marked = insert_markers({"the", "soldier", "attack", "the", "city"}, {{1, 2}, {2, 3}, {4, 5}});
  SUBCASE("deterministic") {
    auto a = enc.encode(marked), b = enc.encode(marked);
    CHECK(a.outputs == b.outputs);
  }
  SUBCASE("shape at max_len") {
    std::vector<std::string> toks(static_cast<std::size_t>(enc.config().max_len), "a");
    auto e = enc.encode(MarkedSentence{toks, {}});
    CHECK(e.outputs.rows() == enc.config().max_len);
    CHECK(e.outputs.cols() == enc.config().dim);
  }
  SUBCASE("all-zero parameters give zero outputs") {
    TextEncoder zero = enc;
    for (std::size_t i = 0; i < zero.params().size(); ++i) zero.params().value(i).setZero();
    CHECK(zero.encode(marked).outputs.isZero(0.0));
  }
  SUBCASE("span representation is the open-marker row") {
    auto e = enc.encode(marked);
    CHECK(span_representation(e, 0) == e.outputs.row(marked.markers[0].open));
    CHECK(span_representation(e, 1) != span_representation(e, 0));
  }
  SUBCASE("span lost to truncation is an error") {
    // Same weights with a 4-row position table, i.e. max_len 4.
    TextEncoder cut(enc.vocab(), [&] {
      ParameterSet q = enc.checkpoint_params();
      q.at("text.pos_embed").conservativeResize(4, Eigen::NoChange);
      return q;
    }());
    auto e = cut.encode(marked);
    CHECK(e.outputs.rows() <= 4);
    CHECK_THROWS_AS(span_representation(e, 2), SpanUnavailable);
  }
  SUBCASE("padding beyond the attended length does not change outputs") {
    std::vector<int> ids = enc.to_ids(marked.tokens);
    ad::Tape tape(false);
    auto bound = bind(tape, enc.params(), false);
    Matrix plain = enc.forward(tape, bound, ids, static_cast<int>(ids.size())).value();
    std::vector<int> padded = ids;
    padded.resize(ids.size() + 5, Vocabulary::kPad);
    Matrix withpad = enc.forward(tape, bound, padded, static_cast<int>(ids.size())).value();
    CHECK((withpad.topRows(plain.rows()) - plain).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("encode gradients match finite differences for every tensor") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    TextEncoder enc(tiny(), words(), 100 + static_cast<std::uint64_t>(trial));
    std::vector<int> ids;
    for (int i = 0; i < 8; ++i) ids.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(enc.vocab().size())));
    Matrix probe = Matrix::Random(8, enc.config().dim);
    auto loss = [&](const ParameterSet& p, Gradients* g) {
      ad::Tape tape(g != nullptr);
      auto bound = bind(tape, p, g != nullptr);
      ad::Var out = enc.forward(tape, bound, ids, 8);
      ad::Var l = ad::sum(ad::mul(ad::tanh(out), tape.constant(probe)));
      if (g) {
        tape.backward(l);
        *g = collect(tape, bound);
      }
      return l.scalar();
    };
    Gradients g;
    loss(enc.params(), &g);
    auto rep = testutil::check_gradients(
        enc.params(), [&](const ParameterSet& p) { return loss(p, nullptr); }, g, 1e-4, 12, rng);
    INFO(rep.worst_name);
    CHECK(rep.worst < 1e-3);
  }
}

TEST_CASE("encode_nodes uses marker rows and falls back to concept embeddings") {
  auto g = testutil::make_graph(3, {{0, 1, "ARG0"}});
  g.tokens = {"attack", "soldier", "city"};
  g.nodes[2].span.reset();
  g.nodes[2].concept_label = "city";
  TextEncoder enc(tiny(), Vocabulary::build({g}), 2);
  Matrix x = node_vectors(enc, g);
  REQUIRE(x.rows() == 3);
  auto marked = insert_markers(g.tokens, {{0, 1}, {1, 2}});
  auto e = enc.encode(marked);
  CHECK((x.row(0) - span_representation(e, 0)).norm() < 1e-12);
  CHECK((x.row(1) - span_representation(e, 1)).norm() < 1e-12);
  CHECK(x.row(2) == enc.params().at("text.tok_embed").row(enc.vocab().id("city")));
}

TEST_CASE("vocabulary file round trip") {
  auto v = words({"naïve"});
  const auto path = (std::filesystem::temp_directory_path() / "cleve_vocab_test.txt").string();
  v.save(path);
  CHECK(Vocabulary::load(path) == v);
  std::remove(path.c_str());
  CHECK(v.id("never-seen") == Vocabulary::kUnk);
  CHECK(v.id("[E16]") > 0);
}
