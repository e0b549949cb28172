#include "cleve/graph_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "cleve/errors.hpp"

namespace cleve {

const std::vector<std::string>& relation_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> v;
    for (int i = 0; i <= 5; ++i) v.push_back("ARG" + std::to_string(i));
    v.push_back("ARG");
    for (const char* r : {"time", "location", "mod", "name", "poss", "quant", "domain", "manner", "purpose",
                          "cause", "topic", "degree", "polarity", "source", "destination", "instrument",
                          "beneficiary", "accompanier", "part", "consist", "example", "frequency", "duration",
                          "path", "direction", "condition", "concession", "extent", "medium", "subevent", "unit",
                          "value", "age", "li", "mode", "polite", "ord", "range", "scale", "calendar", "day",
                          "month", "year", "weekday", "dayperiod", "season", "timezone", "decade", "century",
                          "era", "quarter", "wiki"})
      v.emplace_back(r);
    for (int i = 1; i <= 5; ++i) v.push_back("op" + std::to_string(i));
    for (int i = 1; i <= 5; ++i) v.push_back("snt" + std::to_string(i));
    v.emplace_back("<unk-rel>");
    return v;
  }();
  return labels;
}

int relation_index(const std::string& rel) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& labels = relation_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) m.emplace(labels[i], static_cast<int>(i));
    return m;
  }();
  auto it = index.find(rel);
  return it == index.end() ? static_cast<int>(relation_labels().size()) - 1 : it->second;
}

LabeledGraph LabeledGraph::from(const AmrGraph& g) {
  LabeledGraph out;
  out.num_nodes = static_cast<int>(g.nodes.size());
  for (const auto& e : g.edges) out.edges.push_back({g.index_of(e.src), g.index_of(e.dst), e.rel});
  return out;
}

LabeledGraph LabeledGraph::from(const SubgraphSample& s) { return {s.num_nodes(), s.edges}; }

GraphEncoder::GraphEncoder(GraphEncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.layers < 1 || cfg_.hidden < 1 || cfg_.input_dim < 1) throw ConfigError("graph encoder: non-positive size");
  auto rng = derive_rng(seed, {21});
  const int h = cfg_.hidden;
  params_.add("gin.proj", random_normal(cfg_.input_dim, h, 1.0 / std::sqrt(cfg_.input_dim), rng));
  params_.add("gin.edge_embed", random_normal(static_cast<Eigen::Index>(relation_labels().size()), h, 0.1, rng));
  for (int k = 0; k < cfg_.layers; ++k) {
    const std::string p = "gin.layer" + std::to_string(k) + ".";
    params_.add(p + "eps", Matrix::Zero(1, 1));
    params_.add(p + "w1", random_normal(h, h, std::sqrt(2.0 / h), rng));
    params_.add(p + "b1", Matrix::Zero(1, h));
    params_.add(p + "w2", random_normal(h, h, 1.0 / std::sqrt(h), rng));
    params_.add(p + "b2", Matrix::Zero(1, h));
  }
  index_params();
}

GraphEncoder::GraphEncoder(const ParameterSet& params, double dropout) {
  if (!params.contains("gin.proj") || !params.contains("gin.edge_embed"))
    throw DataError("checkpoint lacks gin.proj / gin.edge_embed");
  cfg_.input_dim = static_cast<int>(params.at("gin.proj").rows());
  cfg_.hidden = static_cast<int>(params.at("gin.proj").cols());
  cfg_.dropout = dropout;
  cfg_.layers = 0;
  while (params.contains("gin.layer" + std::to_string(cfg_.layers) + ".w1")) ++cfg_.layers;
  if (cfg_.layers == 0) throw DataError("checkpoint has no gin layers");
  GraphEncoder fresh(cfg_, 0);
  params_ = fresh.params_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& m = params.at(params_.name(i));
    if (m.rows() != params_.value(i).rows() || m.cols() != params_.value(i).cols())
      throw DataError("checkpoint tensor " + params_.name(i) + " has the wrong shape");
    params_.value(i) = m;
  }
  index_params();
}

void GraphEncoder::index_params() {
  proj_ = params_.index("gin.proj");
  edge_ = params_.index("gin.edge_embed");
  layer_idx_.clear();
  for (int k = 0; k < cfg_.layers; ++k) {
    const std::string p = "gin.layer" + std::to_string(k) + ".";
    layer_idx_.push_back({params_.index(p + "eps"), params_.index(p + "w1"), params_.index(p + "b1"),
                          params_.index(p + "w2"), params_.index(p + "b2")});
  }
}

ad::Var GraphEncoder::forward(const std::vector<ad::Var>& bound, const LabeledGraph& g, ad::Var features,
                              std::mt19937_64* rng, bool normalize) const {
  const int n = g.num_nodes;
  if (n == 0) throw std::invalid_argument("encode_graph: empty graph");
  if (features.rows() != n || features.cols() != cfg_.input_dim)
    throw std::invalid_argument("encode_graph: feature matrix is " + std::to_string(features.rows()) + "x" +
                                std::to_string(features.cols()) + ", expected " + std::to_string(n) + "x" +
                                std::to_string(cfg_.input_dim));
  ad::Tape& tape = *features.tape();
  Matrix adj = Matrix::Zero(n, n);
  Matrix incidence = Matrix::Zero(n, static_cast<Eigen::Index>(relation_labels().size()));
  for (const auto& e : g.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) throw std::invalid_argument("encode_graph: bad edge");
    adj(e.src, e.dst) += 1.0;
    adj(e.dst, e.src) += 1.0;
    const int r = relation_index(e.rel);
    incidence(e.src, r) += 1.0;
    incidence(e.dst, r) += 1.0;
  }
  ad::Var a = tape.constant(std::move(adj));
  ad::Var edge_msg = ad::matmul(tape.constant(std::move(incidence)), bound[edge_]);
  ad::Var h = ad::matmul(features, bound[proj_]);
  const double keep = 1.0 - cfg_.dropout;
  for (std::size_t k = 0; k < layer_idx_.size(); ++k) {
    const auto& L = layer_idx_[k];
    ad::Var self = ad::scale_by(ad::add_scalar(bound[L.eps], 1.0), h);
    ad::Var z = ad::add(ad::add(self, ad::matmul(a, h)), edge_msg);
    h = ad::add_row(ad::matmul(ad::relu(ad::add_row(ad::matmul(z, bound[L.w1]), bound[L.b1])), bound[L.w2]),
                    bound[L.b2]);
    if (k + 1 < layer_idx_.size()) h = ad::relu(h);
    if (rng != nullptr && cfg_.dropout > 0.0) {
      std::bernoulli_distribution bern(keep);
      Matrix mask(h.rows(), h.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = bern(*rng) ? 1.0 / keep : 0.0;
      h = ad::mul_const(h, mask);
    }
  }
  ad::Var readout = ad::mean_rows(h);
  return normalize ? ad::l2_normalize(readout) : readout;
}

RowVector GraphEncoder::encode(const LabeledGraph& g, const Matrix& features) const {
  ad::Tape tape(false);
  auto bound = bind(tape, params_, false);
  return forward(bound, g, tape.constant(features)).value();
}

RowVector encode_graph(const GraphEncoder& enc, const AmrGraph& g, const Matrix& features) {
  return enc.encode(LabeledGraph::from(g), features);
}

std::pair<LabeledGraph, std::vector<int>> one_hop(const AmrGraph& g, int center) {
  const int pos = g.index_of(center);
  if (pos < 0) throw ValidationError("one_hop: unknown node " + std::to_string(center));
  const auto nbrs = g.undirected_neighbors()[static_cast<std::size_t>(pos)];
  std::set<int> keep(nbrs.begin(), nbrs.end());
  keep.insert(center);
  const InducedSubgraph sub = induce(g, keep);
  std::vector<int> positions;
  std::unordered_map<int, int> local;
  for (int id : sub.nodes) {
    local.emplace(id, static_cast<int>(positions.size()));
    positions.push_back(g.index_of(id));
  }
  LabeledGraph lg;
  lg.num_nodes = static_cast<int>(sub.nodes.size());
  for (const auto& e : sub.edges) lg.edges.push_back({local.at(e.src), local.at(e.dst), e.rel});
  return {std::move(lg), std::move(positions)};
}

RowVector one_hop_embedding(const GraphEncoder& enc, const AmrGraph& g, const Matrix& features, int center) {
  auto [lg, positions] = one_hop(g, center);
  Matrix f(static_cast<Eigen::Index>(positions.size()), features.cols());
  for (std::size_t i = 0; i < positions.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = features.row(positions[i]);
  return enc.encode(lg, f);
}

}  // namespace cleve
