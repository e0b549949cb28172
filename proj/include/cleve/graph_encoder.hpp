#pragma once

#include <random>
#include <string>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "cleve/params.hpp"
#include "cleve/subgraph_sampler.hpp"

namespace cleve {

/// Fixed relation-label table of the edge embeddings. Labels outside the
/// list share the final "<unk-rel>" row.
const std::vector<std::string>& relation_labels();
int relation_index(const std::string& rel);

/// Nodes 0..n-1 with labeled edges: the encoder's view of a graph.
struct LabeledGraph {
  int num_nodes = 0;
  std::vector<AmrEdge> edges;  // endpoints are positions 0..n-1

  static LabeledGraph from(const AmrGraph& g);
  static LabeledGraph from(const SubgraphSample& s);
};

struct GraphEncoderConfig {
  int layers = 5;
  int hidden = 64;
  int input_dim = 64;
  double dropout = 0.5;
};

/// Graph isomorphism network with additive edge-label messages:
///   h_v <- MLP_k((1 + eps_k) h_v + sum over incident edges (u, v, r) of (h_u + e_r))
/// over the undirected view, starting from features projected to `hidden`.
/// Readout is the mean node state, L2-normalized (zero stays zero).
class GraphEncoder {
 public:
  GraphEncoder(GraphEncoderConfig cfg, std::uint64_t seed);
  /// Rebuilds from "gin.*" checkpoint tensors.
  explicit GraphEncoder(const ParameterSet& params, double dropout = 0.5);

  const GraphEncoderConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// `features` is n x input_dim. With `rng` non-null, dropout is applied
  /// after every layer (training mode). `normalize=false` returns the raw
  /// mean readout.
  ad::Var forward(const std::vector<ad::Var>& bound, const LabeledGraph& g, ad::Var features,
                  std::mt19937_64* rng = nullptr, bool normalize = true) const;

  /// Inference-mode embedding. Throws std::invalid_argument on an empty graph.
  RowVector encode(const LabeledGraph& g, const Matrix& features) const;

 private:
  void index_params();

  GraphEncoderConfig cfg_;
  ParameterSet params_;
  int proj_ = -1, edge_ = -1;
  struct LayerIdx {
    int eps, w1, b1, w2, b2;
  };
  std::vector<LayerIdx> layer_idx_;
};

/// Embedding of the whole AMR graph; `features` rows follow g.nodes.
RowVector encode_graph(const GraphEncoder& enc, const AmrGraph& g, const Matrix& features);

/// Induced subgraph on `center` and its undirected neighbors, plus the
/// position in g.nodes of each local node.
std::pair<LabeledGraph, std::vector<int>> one_hop(const AmrGraph& g, int center);

/// Embedding of the one-hop neighborhood of `center`. Throws ValidationError
/// for an unknown node.
RowVector one_hop_embedding(const GraphEncoder& enc, const AmrGraph& g, const Matrix& features, int center);

}  // namespace cleve
