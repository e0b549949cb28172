#include "cleve/text_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "cleve/errors.hpp"

namespace cleve {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* s : {"<s>", "</s>", "<pad>", "<unk>"}) add(s);
  for (int k = 0; k < kMaxMarkers; ++k) add(open_marker(k));
  for (int k = 0; k < kMaxMarkers; ++k) add(close_marker(k));
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<AmrGraph>& corpus) {
  Vocabulary v;
  for (const auto& g : corpus) {
    for (const auto& t : g.tokens) v.add(t);
    for (const auto& n : g.nodes) v.add(n.concept_label);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write vocabulary " + path);
  for (const auto& t : tokens_) f << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open vocabulary " + path);
  Vocabulary v;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno < static_cast<int>(v.tokens_.size())) {
      if (line != v.tokens_[static_cast<std::size_t>(lineno)])
        throw ParseError("vocabulary line " + std::to_string(lineno + 1) + ": expected reserved token " +
                             v.tokens_[static_cast<std::size_t>(lineno)],
                         lineno + 1);
    } else if (v.add(line) != lineno) {
      throw ParseError("vocabulary line " + std::to_string(lineno + 1) + ": duplicate token", lineno + 1);
    }
    ++lineno;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Markers and truncation

MarkedSentence insert_markers(const std::vector<std::string>& tokens, const std::vector<TokenSpan>& spans) {
  const int n = static_cast<int>(tokens.size());
  if (static_cast<int>(spans.size()) > Vocabulary::kMaxMarkers)
    throw ValidationError("at most " + std::to_string(Vocabulary::kMaxMarkers) + " marked spans per pass");
  for (const auto& s : spans)
    if (s.start < 0 || s.end <= s.start || s.end > n)
      throw ValidationError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) + ") out of range");
  std::vector<std::size_t> order(spans.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return spans[a].start < spans[b].start; });
  for (std::size_t k = 1; k < order.size(); ++k)
    if (spans[order[k - 1]].overlaps(spans[order[k]])) throw ValidationError("overlapping spans");

  MarkedSentence out;
  out.markers.resize(spans.size());
  out.tokens.reserve(tokens.size() + 2 * spans.size());
  std::size_t next = 0;
  for (int i = 0; i <= n; ++i) {
    // Close before open so adjacent spans nest correctly: [/E1] [E2].
    for (std::size_t k = 0; k < order.size(); ++k)
      if (spans[order[k]].end == i) {
        out.markers[order[k]].close = static_cast<int>(out.tokens.size());
        out.tokens.push_back(Vocabulary::close_marker(static_cast<int>(k)));
      }
    while (next < order.size() && spans[order[next]].start == i) {
      out.markers[order[next]].open = static_cast<int>(out.tokens.size());
      out.tokens.push_back(Vocabulary::open_marker(static_cast<int>(next)));
      ++next;
    }
    if (i < n) out.tokens.push_back(tokens[static_cast<std::size_t>(i)]);
  }
  return out;
}

Truncation truncate_marked(const MarkedSentence& marked, int max_len) {
  const std::size_t n = marked.tokens.size();
  Truncation out;
  out.markers.assign(marked.markers.begin(), marked.markers.end());
  if (static_cast<int>(n) <= max_len) {
    out.tokens = marked.tokens;
    return out;
  }
  std::vector<bool> removed(n, false);
  std::vector<int> kept_index(n);
  for (;;) {
    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      kept_index[i] = k;
      if (!removed[i]) ++k;
    }
    bool changed = false;
    for (auto& m : out.markers) {
      if (!m) continue;
      if (kept_index[m->open] < max_len && kept_index[m->close] >= max_len) {
        removed[m->open] = removed[m->close] = true;
        m.reset();
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (auto& m : out.markers) {
    if (!m) continue;
    if (kept_index[m->open] >= max_len) {
      m.reset();
      continue;
    }
    m = MarkerPair{kept_index[m->open], kept_index[m->close]};
  }
  for (std::size_t i = 0; i < n && static_cast<int>(out.tokens.size()) < max_len; ++i)
    if (!removed[i]) out.tokens.push_back(marked.tokens[i]);
  return out;
}

// ---------------------------------------------------------------------------
// TextEncoder

namespace {

// Sinusoidal start for the learned position table: a fixed offset is a linear
// map of these rows, so attending to a neighbouring token is easy to learn.
Matrix sinusoidal_positions(int rows, int d) {
  Matrix m(rows, d);
  for (int p = 0; p < rows; ++p)
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      m(p, i) = std::sin(p * freq);
      if (i + 1 < d) m(p, i + 1) = std::cos(p * freq);
    }
  round_to_f32(m);
  return m;
}

// Head 0 of every layer starts out attending mostly to the next token, so an
// open marker row carries its span's first word from the first step. With
// zero bias the marker rows fit sentence identity before span content.
constexpr double kLookaheadBias = 4.0;

}  // namespace

TextEncoder::TextEncoder(EncoderConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (cfg_.dim % cfg_.heads != 0) throw ConfigError("encoder dim must be divisible by heads");
  if (cfg_.relative_window < 0) throw ConfigError("relative_window must be non-negative");
  auto rng = derive_rng(seed, {0x7e47});
  const int d = cfg_.dim, f = cfg_.ffn_dim;
  const double wd = 1.0 / std::sqrt(static_cast<double>(d));
  const double wf = 1.0 / std::sqrt(static_cast<double>(f));
  params_.add("text.tok_embed", random_normal(vocab_.size(), d, 1.0, rng));
  params_.add("text.pos_embed", sinusoidal_positions(cfg_.max_len, d));
  params_.add("text.embed_ln.g", Matrix::Ones(1, d));
  params_.add("text.embed_ln.b", Matrix::Zero(1, d));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "text.layer" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      params_.add(p + w, random_normal(d, d, wd, rng));
      params_.add(p + "b" + std::string(w + 1), Matrix::Zero(1, d));
    }
    Matrix rel = Matrix::Zero(cfg_.heads, 2 * cfg_.relative_window + 1);
    if (cfg_.relative_window > 0) rel(0, cfg_.relative_window + 1) = kLookaheadBias;
    params_.add(p + "rel_bias", rel);
    params_.add(p + "ln1.g", Matrix::Ones(1, d));
    params_.add(p + "ln1.b", Matrix::Zero(1, d));
    params_.add(p + "w1", random_normal(d, f, wd, rng));
    params_.add(p + "b1", Matrix::Zero(1, f));
    params_.add(p + "w2", random_normal(f, d, wf, rng));
    params_.add(p + "b2", Matrix::Zero(1, d));
    params_.add(p + "ln2.g", Matrix::Ones(1, d));
    params_.add(p + "ln2.b", Matrix::Zero(1, d));
  }
  index_params();
}

TextEncoder::TextEncoder(Vocabulary vocab, const ParameterSet& params) : vocab_(std::move(vocab)) {
  const ParameterSet text = params.with_prefix("text.");
  if (!text.contains("text.tok_embed")) throw DataError("checkpoint has no text encoder tensors");
  if (!text.contains("text.num_heads")) throw DataError("checkpoint lacks text.num_heads");
  cfg_.heads = static_cast<int>(text.at("text.num_heads")(0, 0));
  cfg_.dim = static_cast<int>(text.at("text.tok_embed").cols());
  cfg_.max_len = static_cast<int>(text.at("text.pos_embed").rows());
  cfg_.layers = 0;
  while (text.contains("text.layer" + std::to_string(cfg_.layers) + ".wq")) ++cfg_.layers;
  cfg_.ffn_dim = cfg_.layers > 0 ? static_cast<int>(text.at("text.layer0.w1").cols()) : 4 * cfg_.dim;
  if (cfg_.layers > 0) {
    if (!text.contains("text.layer0.rel_bias")) throw DataError("checkpoint lacks text.layer0.rel_bias");
    const Matrix& rel = text.at("text.layer0.rel_bias");
    if (rel.rows() != cfg_.heads || rel.cols() % 2 == 0) throw DataError("text.layer0.rel_bias has a bad shape");
    cfg_.relative_window = static_cast<int>(rel.cols() - 1) / 2;
  }
  if (text.at("text.tok_embed").rows() != vocab_.size())
    throw DataError("vocabulary size " + std::to_string(vocab_.size()) + " does not match embedding rows " +
                    std::to_string(text.at("text.tok_embed").rows()));
  // Canonical order, independent of the checkpoint's sorted order.
  TextEncoder fresh(cfg_, vocab_, 0);
  for (std::size_t i = 0; i < fresh.params_.size(); ++i) params_.add(fresh.params_.name(i), text.at(fresh.params_.name(i)));
  index_params();
}

ParameterSet TextEncoder::checkpoint_params() const {
  ParameterSet out = params_;
  out.add("text.num_heads", Matrix::Constant(1, 1, cfg_.heads));
  return out;
}

void TextEncoder::index_params() {
  tok_ = params_.index("text.tok_embed");
  pos_ = params_.index("text.pos_embed");
  eln_g_ = params_.index("text.embed_ln.g");
  eln_b_ = params_.index("text.embed_ln.b");
  layer_idx_.clear();
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "text.layer" + std::to_string(l) + ".";
    auto ix = [&](const char* s) { return params_.index(p + s); };
    layer_idx_.push_back({ix("wq"), ix("bq"), ix("wk"), ix("bk"), ix("wv"), ix("bv"), ix("wo"), ix("bo"),
                          ix("rel_bias"), ix("ln1.g"), ix("ln1.b"), ix("w1"), ix("b1"), ix("w2"), ix("b2"),
                          ix("ln2.g"), ix("ln2.b")});
  }
}

std::vector<int> TextEncoder::to_ids(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab_.id(t));
  return ids;
}

ad::Var TextEncoder::forward(ad::Tape& /*tape*/, const std::vector<ad::Var>& bound, const std::vector<int>& ids,
                             int attended) const {
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw std::invalid_argument("encode: empty input");
  if (n > cfg_.max_len) throw std::invalid_argument("encode: input longer than max_len");
  std::vector<int> positions(static_cast<std::size_t>(n));
  std::iota(positions.begin(), positions.end(), 0);
  ad::Var x = ad::add(ad::gather_rows(bound[tok_], ids), ad::gather_rows(bound[pos_], positions));
  x = ad::layer_norm(x, bound[eln_g_], bound[eln_b_]);

  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> keep(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) keep(r, c) = c < attended;

  const int dh = cfg_.dim / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& L : layer_idx_) {
    ad::Var q = ad::add_row(ad::matmul(x, bound[L.wq]), bound[L.bq]);
    ad::Var k = ad::add_row(ad::matmul(x, bound[L.wk]), bound[L.bk]);
    ad::Var v = ad::add_row(ad::matmul(x, bound[L.wv]), bound[L.bv]);
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
      ad::Var qh = ad::slice_cols(q, h * dh, dh);
      ad::Var kh = ad::slice_cols(k, h * dh, dh);
      ad::Var vh = ad::slice_cols(v, h * dh, dh);
      ad::Var logits = ad::add(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh),
                               ad::relative_bias(bound[L.rel], h, n));
      ad::Var att = ad::softmax_rows(logits, keep);
      heads.push_back(ad::matmul(att, vh));
    }
    ad::Var attn = ad::add_row(ad::matmul(ad::concat_cols(heads), bound[L.wo]), bound[L.bo]);
    x = ad::layer_norm(ad::add(x, attn), bound[L.ln1g], bound[L.ln1b]);
    ad::Var hdn = ad::gelu(ad::add_row(ad::matmul(x, bound[L.w1]), bound[L.b1]));
    ad::Var ffn = ad::add_row(ad::matmul(hdn, bound[L.w2]), bound[L.b2]);
    x = ad::layer_norm(ad::add(x, ffn), bound[L.ln2g], bound[L.ln2b]);
  }
  return x;
}

EncodedSentence TextEncoder::encode(const MarkedSentence& marked) const {
  Truncation tr = truncate_marked(marked, cfg_.max_len);
  EncodedSentence out;
  out.ids = to_ids(tr.tokens);
  out.markers = std::move(tr.markers);
  if (out.ids.empty()) {
    out.outputs = Matrix::Zero(0, cfg_.dim);
    return out;
  }
  ad::Tape tape(false);
  auto bound = bind(tape, params_, false);
  out.outputs = forward(tape, bound, out.ids, static_cast<int>(out.ids.size())).value();
  return out;
}

ad::Var TextEncoder::token_embedding(ad::Tape& /*tape*/, const std::vector<ad::Var>& bound,
                                     const std::string& token) const {
  return ad::row(bound[tok_], vocab_.id(token));
}

Eigen::RowVectorXd span_representation(const EncodedSentence& enc, std::size_t span_index) {
  if (span_index >= enc.markers.size()) throw std::out_of_range("span index out of range");
  const auto& m = enc.markers[span_index];
  if (!m) throw SpanUnavailable("span " + std::to_string(span_index) + " was lost to truncation");
  return enc.outputs.row(m->open);
}

ad::Var encode_nodes(ad::Tape& tape, const TextEncoder& enc, const std::vector<ad::Var>& bound,
                     const AmrGraph& g) {
  if (g.nodes.empty()) throw std::invalid_argument("encode_nodes: empty graph");
  // Unique spans in start order, packed greedily into compatible groups.
  std::vector<TokenSpan> spans;
  for (const auto& n : g.nodes)
    if (n.span) spans.push_back(*n.span);
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  std::vector<std::vector<TokenSpan>> groups;
  for (const auto& s : spans) {
    bool placed = false;
    for (auto& grp : groups) {
      if (static_cast<int>(grp.size()) >= Vocabulary::kMaxMarkers) continue;
      if (std::any_of(grp.begin(), grp.end(), [&](const TokenSpan& o) { return o.overlaps(s); })) continue;
      grp.push_back(s);
      placed = true;
      break;
    }
    if (!placed) groups.push_back({s});
  }
  std::map<TokenSpan, ad::Var> span_rows;
  for (const auto& grp : groups) {
    MarkedSentence marked = insert_markers(g.tokens, grp);
    Truncation tr = truncate_marked(marked, enc.config().max_len);
    std::vector<int> ids = enc.to_ids(tr.tokens);
    ad::Var out = enc.forward(tape, bound, ids, static_cast<int>(ids.size()));
    for (std::size_t i = 0; i < grp.size(); ++i)
      if (tr.markers[i]) span_rows.emplace(grp[i], ad::row(out, tr.markers[i]->open));
  }
  std::vector<ad::Var> rows;
  rows.reserve(g.nodes.size());
  for (const auto& n : g.nodes) {
    auto it = n.span ? span_rows.find(*n.span) : span_rows.end();
    rows.push_back(it != span_rows.end() ? it->second : enc.token_embedding(tape, bound, n.concept_label));
  }
  return ad::concat_rows(rows);
}

Matrix node_vectors(const TextEncoder& enc, const AmrGraph& g) {
  ad::Tape tape(false);
  auto bound = bind(tape, enc.params(), false);
  return encode_nodes(tape, enc, bound, g).value();
}

}  // namespace cleve
