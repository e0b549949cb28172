#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cleve {

/// Half-open token range [start, end).
struct TokenSpan {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool overlaps(const TokenSpan& o) const { return start < o.end && o.start < end; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
  friend auto operator<=>(const TokenSpan&, const TokenSpan&) = default;
};

struct AmrNode {
  int id = 0;
  std::string concept_label;
  std::optional<TokenSpan> span;
  std::vector<int> merged_from;  // absorbed ids, empty unless produced by merging

  friend bool operator==(const AmrNode&, const AmrNode&) = default;
};

struct AmrEdge {
  int src = 0;
  int dst = 0;
  std::string rel;

  friend bool operator==(const AmrEdge&, const AmrEdge&) = default;
  friend auto operator<=>(const AmrEdge&, const AmrEdge&) = default;
};

/// A sentence-level AMR graph: concepts as nodes, relations as edges.
/// Node ids are arbitrary unique integers; `index_of` maps them to positions.
struct AmrGraph {
  std::vector<std::string> tokens;
  std::vector<AmrNode> nodes;
  std::vector<AmrEdge> edges;

  /// Position of node `id` in `nodes`, or -1.
  int index_of(int id) const;
  const AmrNode& node(int id) const;
  bool has_node(int id) const { return index_of(id) >= 0; }

  /// Node ids with no incoming edge, in node order.
  std::vector<int> roots() const;

  /// Undirected neighbor ids per node position (deduplicated, sorted).
  std::vector<std::vector<int>> undirected_neighbors() const;

  friend bool operator==(const AmrGraph&, const AmrGraph&) = default;
};

/// Throws ValidationError (message prefixed with `name`) when an invariant
/// fails: duplicate ids, dangling edges, self loops, spans out of range,
/// directed cycles.
void validate(const AmrGraph& g, const std::string& name = "graph");

/// True if `rel` is "name" or "op" followed by one or more digits.
bool is_entity_link(std::string_view rel);

/// Membership in the core trigger-argument relation family:
/// "time", "location", or "ARG" followed by zero or more digits.
bool core_relation(std::string_view rel);

/// Collapse every component linked by name/op edges into its head node.
/// Warnings for dropped edges (self loops from non-entity edges, or edges
/// that would close a cycle) are appended to `warnings` when given.
AmrGraph merge_entity_nodes(const AmrGraph& g, std::vector<std::string>* warnings = nullptr);

using NodePair = std::pair<int, int>;  // (trigger id, argument id)

struct PairSet {
  std::vector<NodePair> positives;
};

/// Distinct (src, dst) of core-relation edges, sorted.
PairSet positive_pairs(const AmrGraph& g);

/// True if some edge src -> dst carries a core relation.
bool has_core_edge(const AmrGraph& g, int src, int dst);

enum class Replaced : std::uint8_t { kTrigger, kArgument };

struct NegativeSample {
  NodePair pair;
  Replaced replaced;

  friend bool operator==(const NegativeSample&, const NegativeSample&) = default;
};

/// Up to `m_t` trigger-replaced then up to `m_a` argument-replaced negatives
/// for the positive `pair`, drawn without replacement from nodes other than
/// the pair's endpoints.
std::vector<NegativeSample> sample_negatives(const AmrGraph& g, NodePair pair, int m_t, int m_a,
                                             std::mt19937_64& rng);

struct Candidates {
  std::vector<int> triggers;   // nodes with an outgoing core edge
  std::vector<int> arguments;  // nodes with an incoming core edge
};

Candidates identify_candidates(const AmrGraph& g);

/// Surface text of a node: its span tokens joined by spaces, or the concept.
std::string node_text(const AmrGraph& g, int id);

}  // namespace cleve
