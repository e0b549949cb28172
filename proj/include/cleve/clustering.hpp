#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cleve/parallel.hpp"
#include "cleve/params.hpp"

namespace cleve {

/// One core-relation link of a candidate: the relation and the index of the
/// counterpart in the other side's candidate list.
struct ContextLink {
  std::string relation;
  int counterpart = 0;
};

struct CandidateContext {
  std::string owner;               // first component of every constraint tuple
  std::vector<ContextLink> links;
  RowVector semantic;              // E_g
  std::map<std::string, RowVector> relation_structure;  // E_r, triggers only
  RowVector structure;             // E_R, triggers only (may be empty)
};

struct ClusterAssignment {
  std::vector<int> labels;
  int k = 0;

  static ClusterAssignment singletons(std::size_t n);
  friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

using ConstraintTuple = std::tuple<std::string, std::string, int>;  // (owner, relation, counterpart cluster)

/// log(1 + |L1 & L2| / |L1 | L2|); 0 when both are empty.
double constraint_f(const std::set<ConstraintTuple>& l1, const std::set<ConstraintTuple>& l2);

std::set<ConstraintTuple> context_tuples(const CandidateContext& c, const ClusterAssignment& counterpart_clusters);

/// Cosine similarity; 0 if either vector is zero. Throws std::invalid_argument
/// on a length mismatch.
double cosine(const RowVector& a, const RowVector& b);

/// lambda cos(E_g) + f + (1 - lambda) mean over shared relations of cos(E_r);
/// the last term is 0 without shared relations. With use_structure=false the
/// structural term is dropped and the semantic weight becomes 1.
double trigger_similarity(const CandidateContext& t1, const CandidateContext& t2, double lambda,
                          const ClusterAssignment& argument_clusters, bool use_structure = true);

/// cos(E_g) + f.
double argument_similarity(const CandidateContext& a1, const CandidateContext& a2,
                           const ClusterAssignment& trigger_clusters);

/// Sum over unordered pairs u != v: sim for pairs in different clusters,
/// 1 - sim for pairs in the same cluster.
double pair_objective(const Matrix& sim, const ClusterAssignment& c, Exec exec = Exec::kParallel);

/// D_inter + D_intra over triggers plus the same over arguments.
double objective_O(const ClusterAssignment& trigger_clusters, const ClusterAssignment& argument_clusters,
                   const std::vector<CandidateContext>& triggers, const std::vector<CandidateContext>& arguments,
                   double lambda, bool use_structure = true);

/// Precomputes the assignment-independent parts of both similarity functions
/// so the alternating loop only recomputes the constraint term.
class JointSimilarity {
 public:
  JointSimilarity(const std::vector<CandidateContext>& triggers, const std::vector<CandidateContext>& arguments,
                  double lambda, bool use_structure, Exec exec = Exec::kParallel);

  std::size_t num_triggers() const { return static_cast<std::size_t>(trigger_base_.rows()); }
  std::size_t num_arguments() const { return static_cast<std::size_t>(argument_base_.rows()); }

  /// Full symmetric matrices (diagonal included).
  Matrix trigger_matrix(const ClusterAssignment& argument_clusters) const;
  Matrix argument_matrix(const ClusterAssignment& trigger_clusters) const;
  double objective(const ClusterAssignment& trigger_clusters, const ClusterAssignment& argument_clusters) const;

 private:
  // Per candidate: (packed owner/relation id, counterpart index) per link.
  using Links = std::vector<std::vector<std::pair<std::int64_t, int>>>;
  Matrix with_constraints(const Matrix& base, const Links& links, const ClusterAssignment& counterpart) const;

  Matrix trigger_base_, argument_base_;
  Links trigger_links_, argument_links_;
  Exec exec_;
};

struct SpectralConfig {
  int kmeans_iterations = 100;
  int kmeans_restarts = 5;
};

/// Normalized spectral clustering with k-means++ on the row-normalized
/// bottom-K eigenvectors. Labels are renumbered by first appearance; no
/// cluster is empty. Throws ConfigError if K is outside [1, n] and
/// NumericError on non-finite affinities.
ClusterAssignment spectral_cluster(const Matrix& similarity, int k, std::uint64_t seed,
                                   const SpectralConfig& cfg = {});

struct ClusteringConfig {
  int kt_min = 2, kt_max = 2;
  int ka_min = 2, ka_max = 2;
  double lambda = 0.5;
  int max_iterations = 10;
  bool use_structure = true;
  std::uint64_t seed = 42;
  SpectralConfig spectral;
  Exec exec = Exec::kParallel;
};

struct JointResult {
  ClusterAssignment triggers;
  ClusterAssignment arguments;
  double objective = 0.0;
  int kt = 0, ka = 0;
  std::vector<double> evaluated;  // O of every clustering considered, grid order
};

/// Alternating trigger/argument spectral clustering over the (K_T, K_A)
/// grid, keeping the lowest objective (earliest wins ties). Arguments are
/// initialised first, against singleton trigger ids.
JointResult joint_cluster(const std::vector<CandidateContext>& triggers,
                          const std::vector<CandidateContext>& arguments, const ClusteringConfig& cfg);

}  // namespace cleve
