#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "cleve/clustering.hpp"
#include "cleve/graph_encoder.hpp"
#include "cleve/parallel.hpp"
#include "cleve/text_encoder.hpp"
#include "json.hpp"

namespace cleve {

// ---------------------------------------------------------------------------
// Supervised classification

/// A trigger candidate (event detection) or a trigger plus an argument
/// candidate (argument classification). The optional graph supplies the
/// one-hop structure feature; without it that feature is zero.
struct SupervisedInstance {
  std::vector<std::string> tokens;
  TokenSpan trigger;
  std::optional<TokenSpan> argument;
  std::string label;
  std::optional<AmrGraph> graph;
};

/// JSONL with {"tokens", "trigger", "argument", "label"} and optionally
/// "nodes"/"edges" in corpus format. ParseError carries the line number.
std::vector<SupervisedInstance> read_instances_jsonl(const std::string& path);
std::vector<SupervisedInstance> read_instances_jsonl(std::istream& in);
void write_instances_jsonl(const std::vector<SupervisedInstance>& instances, std::ostream& out);

/// Max-pools the rows of `x` in segments closed (inclusively) by each split;
/// the remainder after the last split is the final segment. Empty segments
/// give zeros. Splits must be non-decreasing and inside [0, n).
RowVector dynamic_multi_pooling(const Matrix& x, const std::vector<int>& splits);
ad::Var dynamic_multi_pooling(ad::Var x, const std::vector<int>& splits);

/// [x_sem, g_str]; either part may be empty.
RowVector instance_embedding(const RowVector& x_sem, const RowVector& g_str);

/// One tanh hidden layer and a softmax output; tensors "head.*".
class ClassifierHead {
 public:
  ClassifierHead(int input_dim, int hidden_dim, int classes, std::uint64_t seed);
  explicit ClassifierHead(const ParameterSet& params);

  int input_dim() const { return static_cast<int>(params_.at("head.w1").rows()); }
  int classes() const { return static_cast<int>(params_.at("head.w2").cols()); }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  ad::Var logits(const std::vector<ad::Var>& bound, ad::Var embedding) const;
  /// Class probabilities. Throws std::invalid_argument on a size mismatch.
  RowVector classify(const RowVector& embedding) const;

 private:
  ParameterSet params_;
};

enum class FeatureSet { kBoth, kSemanticOnly, kStructureOnly };

struct FinetuneConfig {
  int batch_size = 40;
  int epochs = 30;
  double learning_rate = 1e-5;
  AdamConfig adam;
  int hidden_dim = 128;
  FeatureSet features = FeatureSet::kBoth;
  std::uint64_t seed = 42;
  Exec exec = Exec::kParallel;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean cross-entropy over the epoch
  double val_f1 = 0.0;
};

struct FinetuneModel {
  TextEncoder text;
  GraphEncoder graph;
  ClassifierHead head;
  std::vector<std::string> labels;  // class index -> label
  FeatureSet features = FeatureSet::kBoth;
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 = the initial parameters were best
};

/// Differentiable instance embedding for `features` on the tapes of `bt`
/// (text) and `bg` (graph) bindings. With `dropout_rng` the graph encoder
/// runs in training mode.
ad::Var instance_features(const TextEncoder& text, const std::vector<ad::Var>& bt, const GraphEncoder& graph,
                          const std::vector<ad::Var>& bg, const SupervisedInstance& inst, FeatureSet features,
                          std::mt19937_64* dropout_rng = nullptr);

/// Node of `g` best matching `span`: exact match, else largest overlap.
std::optional<int> match_node(const AmrGraph& g, const TokenSpan& span);

/// Micro-F1 over every label except "None" (equal to accuracy when no
/// "None" label exists).
double micro_f1(const std::vector<int>& pred, const std::vector<int>& gold, const std::vector<std::string>& labels);

std::vector<int> predict(const FinetuneModel& model, const std::vector<SupervisedInstance>& instances,
                         Exec exec = Exec::kParallel);

/// Joint updates of both encoders and a fresh head with cross-entropy;
/// keeps the epoch with the best validation micro-F1 (earliest on ties).
/// Throws DataError with fewer than two classes in `train`.
FinetuneModel finetune(const std::vector<SupervisedInstance>& train, const std::vector<SupervisedInstance>& dev,
                       TextEncoder text, GraphEncoder graph, const FinetuneConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Liberal event extraction

struct CandidateRef {
  int sentence = 0;
  int node = 0;
  std::string id() const { return std::to_string(sentence) + ":" + std::to_string(node); }
};

struct LiberalConfig {
  ClusteringConfig clustering;
  int exemplars = 5;
  Exec exec = Exec::kParallel;
};

struct LiberalInputs {
  std::vector<CandidateRef> triggers, arguments;
  std::vector<CandidateContext> trigger_contexts, argument_contexts;
};

struct LiberalResult {
  LiberalInputs inputs;
  JointResult clustering;
  nlohmann::ordered_json output;  // {"K_T", "K_A", "O", "triggers", "arguments"}
  nlohmann::ordered_json schema;  // {"clusters": [...], "argument_clusters": [...]}
};

/// Candidate contexts for every trigger and argument of the corpus. With a
/// null graph encoder the structure vectors are left empty.
LiberalInputs build_liberal_inputs(const std::vector<AmrGraph>& corpus, const TextEncoder& text,
                                   const GraphEncoder* graph, Exec exec = Exec::kParallel);

/// Candidate identification, context assembly, joint clustering and schema
/// summary. `cfg.clustering.use_structure=false` is the text-only ablation.
/// Throws DataError when the corpus yields no candidates.
LiberalResult liberal_pipeline(const std::vector<AmrGraph>& corpus, const TextEncoder& text,
                               const GraphEncoder* graph, const LiberalConfig& cfg);

}  // namespace cleve
