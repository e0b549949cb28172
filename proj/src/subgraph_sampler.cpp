#include "cleve/subgraph_sampler.hpp"

#include <algorithm>
#include <numeric>

#include "cleve/errors.hpp"

namespace cleve {

int SubgraphSample::anonymized(int original) const {
  for (const auto& [o, a] : id_map)
    if (o == original) return a;
  return -1;
}

int pick_ego(const AmrGraph& g, std::mt19937_64& rng) {
  if (g.nodes.empty()) throw ValidationError("cannot pick an ego from an empty graph");
  const auto roots = g.roots();
  if (roots.empty()) throw ValidationError("graph has no root node (cyclic?)");
  std::uniform_int_distribution<std::size_t> pick(0, roots.size() - 1);
  return roots[pick(rng)];
}

std::set<int> rwr(const AmrGraph& g, int ego, double p_restart, int max_steps, std::mt19937_64& rng) {
  if (p_restart < 0.0 || p_restart > 1.0) throw std::invalid_argument("restart probability outside [0,1]");
  const int ego_pos = g.index_of(ego);
  if (ego_pos < 0) throw ValidationError("ego " + std::to_string(ego) + " not in graph");
  const auto adj = g.undirected_neighbors();
  std::set<int> visited{ego};
  auto all_visited = [&](int pos) {
    return std::all_of(adj[pos].begin(), adj[pos].end(), [&](int v) { return visited.count(v) > 0; });
  };
  if (adj[ego_pos].empty()) return visited;
  std::bernoulli_distribution restart(p_restart);
  int cur = ego_pos;
  for (int step = 0; step < max_steps; ++step) {
    if (restart(rng)) {
      cur = ego_pos;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, adj[cur].size() - 1);
      cur = g.index_of(adj[cur][pick(rng)]);
    }
    visited.insert(g.nodes[cur].id);
    if (all_visited(cur)) break;
  }
  return visited;
}

InducedSubgraph induce(const AmrGraph& g, const std::set<int>& nodes) {
  for (int id : nodes)
    if (!g.has_node(id)) throw ValidationError("induce: unknown node id " + std::to_string(id));
  InducedSubgraph sub;
  for (const auto& n : g.nodes)
    if (nodes.count(n.id)) sub.nodes.push_back(n.id);
  for (const auto& e : g.edges)
    if (nodes.count(e.src) && nodes.count(e.dst)) sub.edges.push_back(e);
  return sub;
}

SubgraphSample anonymize(const AmrGraph& g, const InducedSubgraph& sub, const Matrix& features,
                         std::mt19937_64& rng) {
  const std::size_t k = sub.nodes.size();
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  SubgraphSample s;
  s.id_map.reserve(k);
  for (std::size_t i = 0; i < k; ++i) s.id_map.emplace_back(sub.nodes[i], perm[i]);
  auto map_id = [&](int original) {
    for (std::size_t i = 0; i < k; ++i)
      if (sub.nodes[i] == original) return perm[i];
    return -1;
  };
  for (const auto& e : sub.edges) s.edges.push_back({map_id(e.src), map_id(e.dst), e.rel});
  if (features.size() != 0) {
    s.features.resize(static_cast<Eigen::Index>(k), features.cols());
    for (std::size_t i = 0; i < k; ++i) s.features.row(perm[i]) = features.row(g.index_of(sub.nodes[i]));
  }
  return s;
}

SubgraphSample sample_subgraph(const AmrGraph& g, const Matrix& features, const SamplerConfig& cfg,
                               std::mt19937_64& rng) {
  const int ego = pick_ego(g, rng);
  const auto visited = rwr(g, ego, cfg.restart_probability, cfg.max_steps, rng);
  SubgraphSample s = anonymize(g, induce(g, visited), features, rng);
  s.ego = ego;
  return s;
}

std::pair<SubgraphSample, SubgraphSample> sample_positive_pair(const AmrGraph& g, const Matrix& features,
                                                               const SamplerConfig& cfg, std::mt19937_64& rng) {
  SubgraphSample a = sample_subgraph(g, features, cfg, rng);
  SubgraphSample b = sample_subgraph(g, features, cfg, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace cleve
