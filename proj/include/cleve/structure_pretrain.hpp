#pragma once

#include <functional>
#include <random>
#include <vector>

#include "cleve/graph_encoder.hpp"
#include "cleve/parallel.hpp"
#include "cleve/semantic_pretrain.hpp"
#include "cleve/subgraph_sampler.hpp"
#include "cleve/text_encoder.hpp"

namespace cleve {

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d embeddings, same shape as the input
};

/// Rows are a_1..a_2m; row 2i (0-based) is the anchor of pair i and row
/// 2i+1 its positive. For each anchor the softmax runs over every other row
/// with dot products divided by `tau`. Throws std::invalid_argument for an
/// odd or zero row count or tau <= 0.
InfoNceResult infonce(const Matrix& embeddings, double tau);
double infonce_loss(const Matrix& embeddings, double tau);

/// Two samples per selected graph: slots 2i and 2i+1 come from graphs[i].
/// `features[i]` rows follow graphs[i].nodes (may be empty matrices).
std::vector<SubgraphSample> build_structure_batch(const std::vector<const AmrGraph*>& graphs,
                                                  const std::vector<const Matrix*>& features,
                                                  const SamplerConfig& cfg, std::mt19937_64& rng);

struct StructureTrainConfig {
  int batch_size = 1024;  // graphs per batch (m)
  double temperature = 0.07;
  double restart_probability = 0.8;
  int max_walk_steps = 128;
  int warmup_steps = 7500;
  double weight_decay = 1e-5;
  int training_steps = 75000;
  double learning_rate = 0.005;
  AdamConfig adam;
  int layers = 5;
  double dropout = 0.5;
  int hidden_dim = 64;
  std::uint64_t seed = 42;
  Exec exec = Exec::kParallel;
};

/// Linear warmup to `lr` over `warmup` steps (1-based), then constant.
double warmup_lr(double lr, int step, int warmup);

struct StructureModel {
  GraphEncoder encoder;
  std::vector<LossRecord> trace;  // train losses only
};

/// Node features of every graph from the (frozen) text encoder.
std::vector<Matrix> corpus_features(const TextEncoder& text, const std::vector<AmrGraph>& corpus,
                                    Exec exec = Exec::kParallel);

/// AdamW with warmup on the subgraph-discrimination objective. Returns the
/// final parameters. Throws DataError for an empty corpus.
StructureModel train_structure(const std::vector<AmrGraph>& corpus, const TextEncoder& text,
                               const StructureTrainConfig& cfg,
                               const std::function<void(const LossRecord&)>& on_record = {});

}  // namespace cleve
