#include "cleve/structure_pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "cleve/errors.hpp"

namespace cleve {

InfoNceResult infonce(const Matrix& e, double tau) {
  const Eigen::Index n = e.rows();
  if (n == 0 || n % 2 != 0) throw std::invalid_argument("infonce: need an even, non-zero number of embeddings");
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: temperature must be positive");
  const Matrix s = e * e.transpose() / tau;
  Matrix ds = Matrix::Zero(n, n);
  InfoNceResult out;
  for (Eigen::Index a = 0; a < n; a += 2) {
    const Eigen::Index p = a + 1;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != a) m = std::max(m, s(a, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != a) z += std::exp(s(a, j) - m);
    out.loss += m + std::log(z) - s(a, p);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != a) ds(a, j) = std::exp(s(a, j) - m) / z;
    ds(a, p) -= 1.0;
  }
  // s = e e^T / tau, so d/de = (ds + ds^T) e / tau.
  out.grad = (ds + ds.transpose()) * e / tau;
  return out;
}

double infonce_loss(const Matrix& embeddings, double tau) { return infonce(embeddings, tau).loss; }

std::vector<SubgraphSample> build_structure_batch(const std::vector<const AmrGraph*>& graphs,
                                                  const std::vector<const Matrix*>& features,
                                                  const SamplerConfig& cfg, std::mt19937_64& rng) {
  if (graphs.size() != features.size()) throw std::invalid_argument("build_structure_batch: size mismatch");
  std::vector<SubgraphSample> out;
  out.reserve(2 * graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    auto [a, b] = sample_positive_pair(*graphs[i], *features[i], cfg, rng);
    a.source_graph = b.source_graph = static_cast<int>(i);
    out.push_back(std::move(a));
    out.push_back(std::move(b));
  }
  return out;
}

double warmup_lr(double lr, int step, int warmup) {
  if (warmup <= 0 || step >= warmup) return lr;
  return lr * static_cast<double>(step) / static_cast<double>(warmup);
}

std::vector<Matrix> corpus_features(const TextEncoder& text, const std::vector<AmrGraph>& corpus, Exec exec) {
  return map_indexed(corpus.size(), [&](std::size_t i) { return node_vectors(text, corpus[i]); }, exec);
}

namespace {

struct Forward {
  std::unique_ptr<ad::Tape> tape;
  std::vector<ad::Var> bound;
  ad::Var out;
};

}  // namespace

StructureModel train_structure(const std::vector<AmrGraph>& corpus, const TextEncoder& text,
                               const StructureTrainConfig& cfg,
                               const std::function<void(const LossRecord&)>& on_record) {
  if (corpus.empty()) throw DataError("structure pre-training: empty corpus");
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].nodes.empty()) throw DataError("structure pre-training: graph " + std::to_string(i) + " is empty");

  GraphEncoderConfig gc{cfg.layers, cfg.hidden_dim, text.config().dim, cfg.dropout};
  StructureModel model{GraphEncoder(gc, cfg.seed), {}};
  GraphEncoder& enc = model.encoder;
  const auto features = corpus_features(text, corpus, cfg.exec);
  const SamplerConfig sc{cfg.restart_probability, cfg.max_walk_steps};
  Adam opt(enc.params(), cfg.adam);
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), corpus.size());

  std::vector<std::size_t> pool(corpus.size());
  for (int step = 1; step <= cfg.training_steps; ++step) {
    auto rng = derive_rng(cfg.seed, {31, static_cast<std::uint64_t>(step)});
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<const AmrGraph*> graphs;
    std::vector<const Matrix*> feats;
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      graphs.push_back(&corpus[pool[i]]);
      feats.push_back(&features[pool[i]]);
    }
    const auto batch = build_structure_batch(graphs, feats, sc, rng);

    auto fwd = map_indexed(
        batch.size(),
        [&](std::size_t k) {
          Forward f;
          f.tape = std::make_unique<ad::Tape>();
          f.bound = bind(*f.tape, enc.params());
          auto drop = derive_rng(cfg.seed, {32, static_cast<std::uint64_t>(step), k});
          f.out = enc.forward(f.bound, LabeledGraph::from(batch[k]), f.tape->constant(batch[k].features), &drop);
          return f;
        },
        cfg.exec);
    Matrix emb(static_cast<Eigen::Index>(batch.size()), cfg.hidden_dim);
    for (std::size_t k = 0; k < batch.size(); ++k) emb.row(static_cast<Eigen::Index>(k)) = fwd[k].out.value();
    const InfoNceResult nce = infonce(emb, cfg.temperature);
    if (!std::isfinite(nce.loss)) throw NumericError("structure pre-training: non-finite loss at step " + std::to_string(step));

    auto grads = map_indexed(
        batch.size(),
        [&](std::size_t k) {
          fwd[k].tape->backward(fwd[k].out, nce.grad.row(static_cast<Eigen::Index>(k)));
          return collect(*fwd[k].tape, fwd[k].bound);
        },
        cfg.exec);
    Gradients g = zero_gradients(enc.params());
    for (const auto& gk : grads) accumulate(g, gk);
    opt.step(enc.params(), g, warmup_lr(cfg.learning_rate, step, cfg.warmup_steps), cfg.weight_decay);

    LossRecord rec{step, nce.loss, std::nullopt};
    model.trace.push_back(rec);
    if (on_record) on_record(rec);
  }
  return model;
}

}  // namespace cleve
