#pragma once

#include <map>
#include <string>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "cleve/downstream.hpp"

namespace cleve {

/// Generator of sentence graphs with latent event classes. Each trigger
/// class has its own verbs and a fixed set of (relation, argument class)
/// slots; each argument class has its own nouns. Sentences hold one or two
/// events plus non-core modifier nodes. Relations stay correct when noun
/// phrases are scrambled; only the surface order changes.
struct SyntheticConfig {
  int sentences = 300;
  int trigger_classes = 4;    // at most 4
  int argument_classes = 3;   // at most 3
  int words_per_class = 6;    // at most 8
  double second_event_probability = 0.7;
  double slot_probability = 0.85;      // chance each optional slot is filled
  double modifier_probability = 0.4;   // chance an argument gets a "mod" node
  /// Fraction of verbs shared by two trigger classes (makes the verb alone
  /// ambiguous).
  double shared_verb_fraction = 0.0;
  /// Chance that a two-event sentence has its noun phrases permuted across
  /// the argument slots of both clauses.
  double scramble_probability = 1.0;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<AmrGraph> graphs;
  /// Candidate id "sentence:node" -> latent class, for triggers and arguments.
  std::map<std::string, std::string> trigger_gold, argument_gold;
};

SyntheticCorpus generate_corpus(const SyntheticConfig& cfg);

/// One event-detection instance per trigger of a generated corpus, labeled
/// with its class and carrying the sentence graph.
std::vector<SupervisedInstance> supervised_instances(const SyntheticCorpus& corpus);

}  // namespace cleve
