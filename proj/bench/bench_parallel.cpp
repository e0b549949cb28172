#include <benchmark/benchmark.h>

#include <random>

#include "cleve/clustering.hpp"
#include "cleve/semantic_pretrain.hpp"
#include "cleve/synthetic.hpp"
#include "cleve/text_encoder.hpp"

using namespace cleve;

// Each benchmark takes the execution mode as its first argument: 0 runs the
// OpenMP kernel, 1 the serial reference. Both produce identical results.

namespace {

Exec mode(const benchmark::State& st) { return st.range(0) == 0 ? Exec::kParallel : Exec::kSerial; }

void BM_PairObjective(benchmark::State& st) {
  const auto n = static_cast<Eigen::Index>(st.range(1));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix sim(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) sim(i, j) = sim(j, i) = u(rng);
  ClusterAssignment c;
  c.k = 8;
  for (Eigen::Index i = 0; i < n; ++i) c.labels.push_back(static_cast<int>(i % 8));
  for (auto _ : st) benchmark::DoNotOptimize(pair_objective(sim, c, mode(st)));
}
BENCHMARK(BM_PairObjective)->ArgsProduct({{0, 1}, {500, 2000}});

void BM_SemanticBatchLoss(benchmark::State& st) {
  SyntheticConfig sc;
  sc.sentences = static_cast<int>(st.range(1));
  auto corpus = generate_corpus(sc);
  EncoderConfig ec;
  ec.layers = 2;
  ec.dim = 64;
  ec.heads = 4;
  ec.ffn_dim = 256;
  TextEncoder enc(ec, Vocabulary::build(corpus.graphs), 1);
  BilinearScorer scorer = BilinearScorer::init(ec.dim, 1);
  std::mt19937_64 rng(3);
  std::vector<SemanticExample> batch;
  for (const auto& g : corpus.graphs) batch.push_back(make_example(g, 9, 30, rng));
  for (auto _ : st) benchmark::DoNotOptimize(batch_loss(batch, enc, scorer, mode(st)));
}
BENCHMARK(BM_SemanticBatchLoss)->ArgsProduct({{0, 1}, {16, 64}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
