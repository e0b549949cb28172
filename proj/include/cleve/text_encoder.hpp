#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "cleve/autodiff.hpp"
#include "cleve/params.hpp"

namespace cleve {

/// Token vocabulary with reserved specials: <s>, </s>, <pad>, <unk>, then
/// [E1]..[E16] and [/E1]..[/E16]. Persisted as one token per line; the line
/// number is the id.
class Vocabulary {
 public:
  static constexpr int kMaxMarkers = 16;
  static constexpr int kBos = 0, kEos = 1, kPad = 2, kUnk = 3;

  Vocabulary();

  int add(const std::string& token);
  /// Id of `token`, or kUnk.
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  static std::string open_marker(int k) { return "[E" + std::to_string(k + 1) + "]"; }
  static std::string close_marker(int k) { return "[/E" + std::to_string(k + 1) + "]"; }

  /// Sentence tokens plus node concepts (the fallback input for span-less nodes).
  static Vocabulary build(const std::vector<AmrGraph>& corpus);

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct MarkerPair {
  int open = 0;
  int close = 0;
};

/// Tokens with [Ek]/[/Ek] inserted. `markers[i]` belongs to input span i;
/// marker numbers follow span start order.
struct MarkedSentence {
  std::vector<std::string> tokens;
  std::vector<MarkerPair> markers;
};

/// Wraps each span in its own marker pair. Throws ValidationError on
/// overlapping or out-of-range spans, or more than 16 spans.
MarkedSentence insert_markers(const std::vector<std::string>& tokens, const std::vector<TokenSpan>& spans);

struct EncoderConfig {
  int layers = 2;
  int dim = 64;
  int heads = 4;
  int ffn_dim = 256;
  int max_len = 128;
  /// Learned per-head attention bias over relative offsets clipped to
  /// [-w, w]. Starts at zero; it makes "look at the next token" a single
  /// parameter, which a marker row needs to pick up its span.
  int relative_window = 8;
};

/// Contextual encodings of one marked sentence.
struct EncodedSentence {
  std::vector<int> ids;                           // after truncation
  Matrix outputs;                                 // ids.size() x dim
  std::vector<std::optional<MarkerPair>> markers; // per input span; nullopt if truncated away
};

class SpanUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Multi-layer post-LN transformer over whitespace tokens with learned
/// absolute positions and a learned relative-position attention bias.
class TextEncoder {
 public:
  TextEncoder(EncoderConfig cfg, Vocabulary vocab, std::uint64_t seed);
  /// Rebuilds from checkpoint tensors ("text.*").
  TextEncoder(Vocabulary vocab, const ParameterSet& params);

  const EncoderConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  /// params() plus the "text.num_heads" shape record needed to rebuild.
  ParameterSet checkpoint_params() const;

  std::vector<int> to_ids(const std::vector<std::string>& tokens) const;

  /// Differentiable forward over `ids`; only the first `attended` positions
  /// are visible as attention keys, later ones are padding. Returns
  /// ids.size() x dim. `bound` comes from bind(tape, params()).
  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& bound, const std::vector<int>& ids,
                  int attended) const;

  /// Truncates to max_len from the right without splitting a marker pair
  /// (split pairs are dropped whole), then runs the forward pass.
  EncodedSentence encode(const MarkedSentence& marked) const;

  /// Embedding-table row for a single token, used for span-less nodes.
  ad::Var token_embedding(ad::Tape& tape, const std::vector<ad::Var>& bound, const std::string& token) const;

 private:
  void index_params();

  EncoderConfig cfg_;
  Vocabulary vocab_;
  ParameterSet params_;
  struct LayerIdx {
    int wq, bq, wk, bk, wv, bv, wo, bo, rel, ln1g, ln1b, w1, b1, w2, b2, ln2g, ln2b;
  };
  int tok_ = -1, pos_ = -1, eln_g_ = -1, eln_b_ = -1;
  std::vector<LayerIdx> layer_idx_;
};

/// Result of truncating a marked sentence.
struct Truncation {
  std::vector<std::string> tokens;
  std::vector<std::optional<MarkerPair>> markers;
};
Truncation truncate_marked(const MarkedSentence& marked, int max_len);

/// x_v rows for every node of `g` (n_nodes x dim): the open-marker row for
/// spanned nodes, the concept's embedding row otherwise (also used when a
/// span is lost to truncation). Spans are marked in groups of at most 16
/// mutually non-overlapping spans, one forward pass per group.
ad::Var encode_nodes(ad::Tape& tape, const TextEncoder& enc, const std::vector<ad::Var>& bound,
                     const AmrGraph& g);

/// Value-only convenience wrapper of encode_nodes.
Matrix node_vectors(const TextEncoder& enc, const AmrGraph& g);

/// Row of `enc` at the open marker of span `span_index`.
Eigen::RowVectorXd span_representation(const EncodedSentence& enc, std::size_t span_index);

}  // namespace cleve
