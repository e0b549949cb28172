#pragma once

#include <random>
#include <string>
#include <vector>

#include "cleve/amr_graph.hpp"

namespace testutil {

inline cleve::AmrGraph make_graph(int n, const std::vector<cleve::AmrEdge>& edges) {
  cleve::AmrGraph g;
  for (int i = 0; i < n; ++i) {
    g.tokens.push_back("w" + std::to_string(i));
    g.nodes.push_back({i, "c" + std::to_string(i), cleve::TokenSpan{i, i + 1}, {}});
  }
  g.edges = edges;
  return g;
}

// Random DAG: edges only run from lower to higher ids, so no cycle is possible.
inline cleve::AmrGraph random_dag(std::mt19937_64& rng, int max_nodes, double edge_p = 0.2) {
  static const std::vector<std::string> rels{"ARG0", "ARG1", "ARG2", "time", "location", "mod", "manner", "poss"};
  std::uniform_int_distribution<int> size(1, max_nodes);
  std::bernoulli_distribution edge(edge_p);
  std::uniform_int_distribution<std::size_t> rel(0, rels.size() - 1);
  const int n = size(rng);
  std::vector<cleve::AmrEdge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (edge(rng)) edges.push_back({u, v, rels[rel(rng)]});
  return make_graph(n, edges);
}

}  // namespace testutil
