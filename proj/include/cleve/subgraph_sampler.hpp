#pragma once

#include <random>
#include <set>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "cleve/params.hpp"

namespace cleve {

/// Node subset of a graph with every edge whose endpoints are both inside.
struct InducedSubgraph {
  std::vector<int> nodes;  // original ids, in graph node order
  std::vector<AmrEdge> edges;
};

/// Induced subgraph with node ids shuffled to 0..k-1.
struct SubgraphSample {
  int source_graph = -1;
  int ego = -1;                            // original id
  std::vector<std::pair<int, int>> id_map; // (original, anonymized), in original node order
  std::vector<AmrEdge> edges;              // anonymized endpoints, labels kept
  Matrix features;                         // row r = features of anonymized node r (may be empty)

  int num_nodes() const { return static_cast<int>(id_map.size()); }
  int anonymized(int original) const;
};

struct SamplerConfig {
  double restart_probability = 0.8;
  int max_steps = 128;
};

/// Uniform choice among root nodes. Throws ValidationError if there is none.
int pick_ego(const AmrGraph& g, std::mt19937_64& rng);

/// Random walk with restart on the undirected view of `g`. After each move or
/// restart the walk stops if every neighbor of the current node has been
/// visited, or once `max_steps` steps were taken.
std::set<int> rwr(const AmrGraph& g, int ego, double p_restart, int max_steps, std::mt19937_64& rng);

/// Throws ValidationError for ids not in `g`.
InducedSubgraph induce(const AmrGraph& g, const std::set<int>& nodes);

/// `features` rows follow `g.nodes` order and travel with their nodes; pass
/// an empty matrix when no features are attached.
SubgraphSample anonymize(const AmrGraph& g, const InducedSubgraph& sub, const Matrix& features, std::mt19937_64& rng);

SubgraphSample sample_subgraph(const AmrGraph& g, const Matrix& features, const SamplerConfig& cfg,
                               std::mt19937_64& rng);

/// Two independent draws from the same graph.
std::pair<SubgraphSample, SubgraphSample> sample_positive_pair(const AmrGraph& g, const Matrix& features,
                                                               const SamplerConfig& cfg, std::mt19937_64& rng);

}  // namespace cleve
