#include "cleve/semantic_pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cleve/errors.hpp"

namespace cleve {

namespace {

// RNG stream tags; each (seed, tag, ...) tuple is an independent generator.
constexpr std::uint64_t kInitStream = 11, kSplitStream = 12, kValStream = 13, kOrderStream = 14,
                        kTrainStream = 15;

void check_dims(const RowVector& x_t, const RowVector& x_a, const Matrix& W) {
  if (W.rows() != x_t.size() || W.cols() != x_a.size())
    throw std::invalid_argument("pair_score: dimension mismatch (" + std::to_string(x_t.size()) + ", " +
                                std::to_string(W.rows()) + "x" + std::to_string(W.cols()) + ", " +
                                std::to_string(x_a.size()) + ")");
}

struct SentenceGrad {
  double loss = 0.0;
  Gradients encoder;
  Matrix W;
};

SentenceGrad sentence_gradient(const TextEncoder& enc, const Matrix& W, const AmrGraph& g,
                               const std::vector<PairInstance>& pairs) {
  ad::Tape tape;
  auto bound = bind(tape, enc.params());
  ad::Var w = tape.variable(W);
  ad::Var nodes = encode_nodes(tape, enc, bound, g);
  ad::Var loss = sentence_loss(g, nodes, pairs, w);
  tape.backward(loss);
  return {loss.scalar(), collect(tape, bound), tape.grad(w)};
}

double sentence_value(const TextEncoder& enc, const Matrix& W, const SemanticExample& ex) {
  if (ex.pairs.empty()) return 0.0;
  ad::Tape tape(false);
  auto bound = bind(tape, enc.params(), false);
  ad::Var w = tape.constant(W);
  return sentence_loss(*ex.graph, encode_nodes(tape, enc, bound, *ex.graph), ex.pairs, w).scalar();
}

}  // namespace

BilinearScorer BilinearScorer::init(int dim, std::uint64_t seed) {
  auto rng = derive_rng(seed, {kInitStream});
  BilinearScorer s;
  s.W = Matrix::Identity(dim, dim) + random_normal(dim, dim, 0.01, rng);
  round_to_f32(s.W);
  return s;
}

ParameterSet BilinearScorer::params() const {
  ParameterSet p;
  p.add("scorer.W", W);
  return p;
}

BilinearScorer BilinearScorer::from_params(const ParameterSet& p) {
  if (!p.contains("scorer.W")) throw DataError("checkpoint lacks scorer.W");
  BilinearScorer s{p.at("scorer.W")};
  if (s.W.rows() != s.W.cols()) throw DataError("scorer.W is not square");
  return s;
}

double pair_score(const RowVector& x_t, const RowVector& x_a, const Matrix& W) {
  check_dims(x_t, x_a, W);
  return (x_t * W * x_a.transpose())(0, 0);
}

double pair_loss_from_scores(double positive, std::span<const double> negatives) {
  double m = positive;
  for (double s : negatives) m = std::max(m, s);
  double z = std::exp(positive - m);
  for (double s : negatives) z += std::exp(s - m);
  return std::max(0.0, m + std::log(z) - positive);
}

double pair_loss(const RowVector& x_t, const RowVector& x_a, const std::vector<RowVector>& neg_triggers,
                 const std::vector<RowVector>& neg_args, const PairScorer& scorer) {
  std::vector<double> neg;
  neg.reserve(neg_triggers.size() + neg_args.size());
  for (const auto& t : neg_triggers) neg.push_back(scorer(t, x_a));
  for (const auto& a : neg_args) neg.push_back(scorer(x_t, a));
  return pair_loss_from_scores(scorer(x_t, x_a), neg);
}

double pair_loss(const RowVector& x_t, const RowVector& x_a, const std::vector<RowVector>& neg_triggers,
                 const std::vector<RowVector>& neg_args, const Matrix& W) {
  return pair_loss(x_t, x_a, neg_triggers, neg_args,
                   [&W](const RowVector& t, const RowVector& a) { return pair_score(t, a, W); });
}

ad::Var pair_loss(ad::Var x_t, ad::Var x_a, ad::Var neg_triggers, ad::Var neg_args, ad::Var W) {
  ad::Var tw = ad::matmul(x_t, W);
  std::vector<ad::Var> scores{ad::matmul(tw, ad::transpose(x_a))};
  if (neg_triggers.valid() && neg_triggers.rows() > 0)
    scores.push_back(ad::transpose(ad::matmul(ad::matmul(neg_triggers, W), ad::transpose(x_a))));
  if (neg_args.valid() && neg_args.rows() > 0) scores.push_back(ad::matmul(tw, ad::transpose(neg_args)));
  ad::Var all = ad::concat_cols(scores);
  return ad::sub(ad::log_sum_exp(all), scores.front());
}

SemanticExample make_example(const AmrGraph& g, int m_t, int m_a, std::mt19937_64& rng) {
  SemanticExample ex;
  ex.graph = &g;
  for (const auto& p : positive_pairs(g).positives) ex.pairs.push_back({p, sample_negatives(g, p, m_t, m_a, rng)});
  return ex;
}

ad::Var sentence_loss(const AmrGraph& g, ad::Var nodes, const std::vector<PairInstance>& pairs, ad::Var W) {
  ad::Tape& tape = *nodes.tape();
  if (pairs.empty()) return tape.constant(Matrix::Zero(1, 1));
  // Every score of the sentence is an entry of X W X^T.
  ad::Var scores = ad::matmul(ad::matmul(nodes, W), ad::transpose(nodes));
  std::vector<ad::Var> losses;
  losses.reserve(pairs.size());
  std::vector<std::pair<int, int>> idx;
  for (const auto& p : pairs) {
    idx.clear();
    idx.emplace_back(g.index_of(p.pair.first), g.index_of(p.pair.second));
    for (const auto& n : p.negatives) idx.emplace_back(g.index_of(n.pair.first), g.index_of(n.pair.second));
    ad::Var s = ad::gather_elements(scores, idx);
    losses.push_back(ad::sub(ad::log_sum_exp(s), ad::element(s, 0, 0)));
  }
  return ad::sum(ad::concat_cols(losses));
}

double batch_loss(const std::vector<SemanticExample>& batch, const TextEncoder& enc, const BilinearScorer& scorer,
                  Exec exec) {
  auto values = map_indexed(batch.size(), [&](std::size_t i) { return sentence_value(enc, scorer.W, batch[i]); }, exec);
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

std::size_t validation_size(std::size_t n) {
  if (n < 2) return 0;
  return std::min<std::size_t>(1000, std::max<std::size_t>(1, n / 10));
}

SemanticModel train_semantic(const std::vector<AmrGraph>& corpus, const SemanticTrainConfig& cfg,
                             const std::function<void(const LossRecord&)>& on_record) {
  if (corpus.empty()) throw DataError("semantic pre-training: empty corpus");
  EncoderConfig ec = cfg.encoder;
  ec.max_len = cfg.max_seq_len;
  TextEncoder enc(ec, Vocabulary::build(corpus), cfg.seed);
  return train_semantic(corpus, cfg, std::move(enc), BilinearScorer::init(ec.dim, cfg.seed), on_record);
}

SemanticModel train_semantic(const std::vector<AmrGraph>& corpus, const SemanticTrainConfig& cfg,
                             TextEncoder encoder, BilinearScorer scorer,
                             const std::function<void(const LossRecord&)>& on_record) {
  if (corpus.empty()) throw DataError("semantic pre-training: empty corpus");
  if (cfg.m_t < 0 || cfg.m_a < 0) throw ConfigError("m_t and m_a must be non-negative");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (scorer.W.rows() != encoder.config().dim || scorer.W.cols() != encoder.config().dim)
    throw ConfigError("scorer dimension does not match the encoder");

  std::size_t total_pairs = 0;
  std::vector<std::size_t> pair_count(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    pair_count[i] = positive_pairs(corpus[i]).positives.size();
    total_pairs += pair_count[i];
  }
  if (total_pairs == 0) throw DataError("semantic pre-training: corpus has no trigger-argument pairs");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  {
    auto rng = derive_rng(cfg.seed, {kSplitStream});
    std::shuffle(order.begin(), order.end(), rng);
  }
  const std::size_t n_val = validation_size(corpus.size());
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train;
  for (std::size_t k = n_val; k < order.size(); ++k)
    if (pair_count[order[k]] > 0) train.push_back(order[k]);
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  if (train.empty()) throw DataError("semantic pre-training: no trigger-argument pairs outside the validation split");

  std::vector<SemanticExample> val_examples;
  for (std::size_t i : val) {
    auto rng = derive_rng(cfg.seed, {kValStream, i});
    val_examples.push_back(make_example(corpus[i], cfg.m_t, cfg.m_a, rng));
  }
  auto val_loss = [&]() {
    return batch_loss(val_examples, encoder, scorer, cfg.exec) / static_cast<double>(val_examples.size());
  };

  ParameterSet wset = scorer.params();
  Adam enc_opt(encoder.params(), cfg.adam);
  Adam w_opt(wset, cfg.adam);

  SemanticModel out{encoder, scorer, {}, 0};
  std::optional<double> best;
  if (!val_examples.empty()) best = val_loss();

  std::vector<std::size_t> epoch_order;
  std::size_t cursor = 0, epoch = 0;
  auto next_batch = [&]() {
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train.size());
    std::vector<std::size_t> batch;
    while (batch.size() < b) {
      if (cursor == epoch_order.size()) {
        epoch_order = train;
        auto rng = derive_rng(cfg.seed, {kOrderStream, epoch++});
        std::shuffle(epoch_order.begin(), epoch_order.end(), rng);
        cursor = 0;
      }
      const std::size_t cand = epoch_order[cursor++];
      if (std::find(batch.begin(), batch.end(), cand) == batch.end()) batch.push_back(cand);
    }
    return batch;
  };

  for (int step = 1; step <= cfg.steps; ++step) {
    const auto batch = next_batch();
    auto grads = map_indexed(
        batch.size(),
        [&](std::size_t k) {
          const auto& g = corpus[batch[k]];
          auto rng = derive_rng(cfg.seed, {kTrainStream, static_cast<std::uint64_t>(step), batch[k]});
          return sentence_gradient(encoder, scorer.W, g, make_example(g, cfg.m_t, cfg.m_a, rng).pairs);
        },
        cfg.exec);
    Gradients g_enc = zero_gradients(encoder.params());
    Gradients g_w = zero_gradients(wset);
    double loss = 0.0;
    for (const auto& r : grads) {
      loss += r.loss;
      accumulate(g_enc, r.encoder);
      g_w[0] += r.W;
    }
    if (!std::isfinite(loss)) throw NumericError("semantic pre-training: non-finite loss at step " + std::to_string(step));
    enc_opt.step(encoder.params(), g_enc, cfg.learning_rate);
    w_opt.step(wset, g_w, cfg.learning_rate);
    scorer.W = wset.value(0);

    LossRecord rec{step, loss / static_cast<double>(batch.size()), std::nullopt};
    const bool eval = !val_examples.empty() && (step % std::max(1, cfg.eval_every) == 0 || step == cfg.steps);
    if (eval) {
      rec.val_loss = val_loss();
      if (!std::isfinite(*rec.val_loss)) throw NumericError("semantic pre-training: non-finite validation loss");
      if (*rec.val_loss < *best) {
        best = rec.val_loss;
        out.encoder = encoder;
        out.scorer = scorer;
        out.best_step = step;
      }
    }
    out.trace.push_back(rec);
    if (on_record) on_record(rec);
  }
  if (val_examples.empty()) {
    out.encoder = encoder;
    out.scorer = scorer;
    out.best_step = cfg.steps;
  }
  return out;
}

}  // namespace cleve
