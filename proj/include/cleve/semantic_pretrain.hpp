#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "cleve/parallel.hpp"
#include "cleve/params.hpp"
#include "cleve/text_encoder.hpp"

namespace cleve {

/// Bilinear trigger-argument scorer, stored as checkpoint tensor "scorer.W".
struct BilinearScorer {
  Matrix W;

  /// Identity plus N(0, 0.01^2) noise.
  static BilinearScorer init(int dim, std::uint64_t seed);
  ParameterSet params() const;
  static BilinearScorer from_params(const ParameterSet& p);
};

/// x_t^T W x_a. Throws std::invalid_argument on shape mismatch.
double pair_score(const RowVector& x_t, const RowVector& x_a, const Matrix& W);

/// -s_pos + log(exp(s_pos) + sum exp(s_neg)), max-shifted. Always >= 0.
double pair_loss_from_scores(double positive, std::span<const double> negatives);

using PairScorer = std::function<double(const RowVector&, const RowVector&)>;

/// Pair loss with negatives (x_t_hat, x_a) for each replaced trigger and
/// (x_t, x_a_hat) for each replaced argument, scored by `scorer`.
double pair_loss(const RowVector& x_t, const RowVector& x_a, const std::vector<RowVector>& neg_triggers,
                 const std::vector<RowVector>& neg_args, const PairScorer& scorer);
double pair_loss(const RowVector& x_t, const RowVector& x_a, const std::vector<RowVector>& neg_triggers,
                 const std::vector<RowVector>& neg_args, const Matrix& W);

/// Differentiable pair loss. `neg_triggers` / `neg_args` hold one candidate
/// per row; pass an invalid Var when there are none.
ad::Var pair_loss(ad::Var x_t, ad::Var x_a, ad::Var neg_triggers, ad::Var neg_args, ad::Var W);

/// One positive pair with its sampled negatives.
struct PairInstance {
  NodePair pair;
  std::vector<NegativeSample> negatives;
};

/// A sentence and the pairs it contributes to the objective.
struct SemanticExample {
  const AmrGraph* graph = nullptr;
  std::vector<PairInstance> pairs;
};

/// Every positive pair of `g` with negatives drawn from `rng`.
SemanticExample make_example(const AmrGraph& g, int m_t, int m_a, std::mt19937_64& rng);

/// Sum of pair losses of one sentence; `nodes` are the rows of encode_nodes.
ad::Var sentence_loss(const AmrGraph& g, ad::Var nodes, const std::vector<PairInstance>& pairs, ad::Var W);

/// Sum over sentences and pairs; sentences without pairs contribute 0.
double batch_loss(const std::vector<SemanticExample>& batch, const TextEncoder& enc, const BilinearScorer& scorer,
                  Exec exec = Exec::kParallel);

struct SemanticTrainConfig {
  int batch_size = 40;
  double learning_rate = 1e-5;
  AdamConfig adam;
  int m_t = 9;
  int m_a = 30;
  int max_seq_len = 128;
  int steps = 1000;
  int eval_every = 50;
  std::uint64_t seed = 42;
  EncoderConfig encoder;
  Exec exec = Exec::kParallel;
};

/// One trace row. Losses are per-sentence means of the summed pair losses.
struct LossRecord {
  int step = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct SemanticModel {
  TextEncoder encoder;
  BilinearScorer scorer;
  std::vector<LossRecord> trace;
  int best_step = 0;  // step whose parameters were returned (0 = initial)
};

/// Held-out size for a corpus of n sentences: min(1000, max(1, n/10)), or 0
/// when n < 2.
std::size_t validation_size(std::size_t n);

/// Trains encoder and scorer with Adam on the pair-discrimination objective
/// and returns the parameters with the lowest validation loss (final
/// parameters when nothing is held out). Throws DataError for an empty
/// corpus or one without positive pairs.
SemanticModel train_semantic(const std::vector<AmrGraph>& corpus, const SemanticTrainConfig& cfg,
                             const std::function<void(const LossRecord&)>& on_record = {});

/// Variant that starts from given parameters instead of a fresh init.
SemanticModel train_semantic(const std::vector<AmrGraph>& corpus, const SemanticTrainConfig& cfg,
                             TextEncoder encoder, BilinearScorer scorer,
                             const std::function<void(const LossRecord&)>& on_record = {});

}  // namespace cleve
