#include "cleve/corpus_io.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "cleve/errors.hpp"

namespace cleve {

using nlohmann::json;

json graph_to_json(const AmrGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json jn{{"id", n.id}, {"concept", n.concept_label}};
    jn["span"] = n.span ? json::array({n.span->start, n.span->end}) : json(nullptr);
    if (!n.merged_from.empty()) jn["merged_from"] = n.merged_from;
    nodes.push_back(std::move(jn));
  }
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"rel", e.rel}});
  return json{{"tokens", g.tokens}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

AmrGraph graph_from_json(const json& j) {
  if (!j.is_object()) throw DataError("graph record is not a JSON object");
  AmrGraph g;
  g.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& jn : j.at("nodes")) {
    AmrNode n;
    n.id = jn.at("id").get<int>();
    n.concept_label = jn.at("concept").get<std::string>();
    if (jn.contains("span") && !jn["span"].is_null()) {
      const auto& s = jn["span"];
      if (!s.is_array() || s.size() != 2) throw DataError("span must be [start, end] or null");
      n.span = TokenSpan{s[0].get<int>(), s[1].get<int>()};
    }
    if (jn.contains("merged_from")) n.merged_from = jn["merged_from"].get<std::vector<int>>();
    g.nodes.push_back(std::move(n));
  }
  for (const auto& je : j.at("edges"))
    g.edges.push_back({je.at("src").get<int>(), je.at("dst").get<int>(), je.at("rel").get<std::string>()});
  return g;
}

std::vector<AmrGraph> read_corpus_jsonl(std::istream& in) {
  std::vector<AmrGraph> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    AmrGraph g;
    try {
      g = graph_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    validate(g, "line " + std::to_string(lineno));
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<AmrGraph> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  return read_corpus_jsonl(in);
}

void write_corpus_jsonl(const std::vector<AmrGraph>& corpus, std::ostream& out) {
  for (const auto& g : corpus) out << graph_to_json(g).dump() << '\n';
}

void write_corpus_jsonl(const std::vector<AmrGraph>& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_corpus_jsonl(corpus, out);
}

// ---------------------------------------------------------------------------
// PENMAN subset

namespace {

struct PendingEdge {
  int src;
  std::string rel;
  // Exactly one of: a resolved node id, or a bare symbol to resolve later.
  int dst = -1;
  std::string symbol;
  std::optional<int> symbol_alignment;
  std::size_t offset = 0;
};

class PenmanParser {
 public:
  explicit PenmanParser(std::string_view text) : s_(text) {}

  AmrGraph parse(const std::vector<std::string>& tokens) {
    skip_ws();
    if (pos_ >= s_.size()) fail("empty input");
    if (s_[pos_] != '(') fail("expected '('");
    parse_node();
    skip_ws();
    if (pos_ < s_.size()) fail(s_[pos_] == ')' ? "unbalanced ')'" : "trailing characters after graph");

    // Resolve bare symbols: defined variables become re-entrant edges,
    // anything else is a constant leaf.
    for (auto& pe : pending_) {
      if (pe.dst < 0) {
        auto it = vars_.find(pe.symbol);
        pe.dst = it != vars_.end() ? it->second : add_node(pe.symbol, pe.symbol_alignment);
      }
    }
    AmrGraph g;
    int max_align = -1;
    for (const auto& [id, c] : concepts_) {
      AmrNode n{id, c.first, std::nullopt, {}};
      if (c.second) {
        n.span = TokenSpan{*c.second, *c.second + 1};
        max_align = std::max(max_align, *c.second);
      }
      g.nodes.push_back(std::move(n));
    }
    if (!tokens.empty()) {
      g.tokens = tokens;
    } else {
      g.tokens.assign(static_cast<std::size_t>(max_align + 1), "_");
      for (const auto& n : g.nodes)
        if (n.span) g.tokens[n.span->start] = n.concept_label;
    }
    for (const auto& pe : pending_) {
      std::string rel = pe.rel;
      int src = pe.src, dst = pe.dst;
      if (rel.size() > 3 && rel.compare(rel.size() - 3, 3, "-of") == 0) {
        rel.resize(rel.size() - 3);
        std::swap(src, dst);
      }
      g.edges.push_back({src, dst, rel});
    }
    return g;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("PENMAN offset " + std::to_string(pos_) + ": " + msg, static_cast<long>(pos_));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  static bool symbol_char(char c) {
    return !std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' && c != ':' && c != '~' &&
           c != '"' && c != '/';
  }

  std::string read_symbol() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && symbol_char(s_[pos_])) ++pos_;
    if (start == pos_) fail("expected a symbol");
    return std::string(s_.substr(start, pos_ - start));
  }

  // "~e.N" or "~e.N,M" (first index kept). Returns nullopt if absent.
  std::optional<int> read_alignment() {
    if (pos_ >= s_.size() || s_[pos_] != '~') return std::nullopt;
    ++pos_;
    if (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) {
      ++pos_;
      if (pos_ >= s_.size() || s_[pos_] != '.') fail("malformed alignment");
      ++pos_;
    }
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("alignment needs a token index");
    int idx = std::stoi(std::string(s_.substr(start, pos_ - start)));
    while (pos_ < s_.size() && (s_[pos_] == ',' || std::isdigit(static_cast<unsigned char>(s_[pos_])))) ++pos_;
    return idx;
  }

  int add_node(const std::string& concept_label, std::optional<int> alignment) {
    int id = next_id_++;
    concepts_.emplace(id, std::make_pair(concept_label, alignment));
    return id;
  }

  // Precondition: s_[pos_] == '('.
  int parse_node() {
    std::size_t open = pos_;
    ++pos_;
    skip_ws();
    std::size_t var_pos = pos_;
    std::string var = read_symbol();
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != '/') fail("expected '/' after variable");
    ++pos_;
    skip_ws();
    std::string concept_label = read_symbol();
    auto align = read_alignment();
    if (vars_.count(var)) {
      pos_ = var_pos;
      fail("duplicate variable '" + var + "'");
    }
    int id = add_node(concept_label, align);
    vars_.emplace(var, id);

    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) {
        pos_ = open;
        fail("unbalanced '(' never closed");
      }
      char c = s_[pos_];
      if (c == ')') {
        ++pos_;
        return id;
      }
      if (c != ':') fail("expected ':role' or ')'");
      ++pos_;
      std::string rel = read_symbol();
      skip_ws();
      if (pos_ >= s_.size()) fail("missing relation target");
      PendingEdge pe;
      pe.src = id;
      pe.rel = rel;
      pe.offset = pos_;
      if (s_[pos_] == '(') {
        pe.dst = parse_node();
      } else if (s_[pos_] == '"') {
        std::size_t q = s_.find('"', pos_ + 1);
        if (q == std::string_view::npos) fail("unterminated string constant");
        std::string value(s_.substr(pos_ + 1, q - pos_ - 1));
        pos_ = q + 1;
        pe.dst = add_node(value, read_alignment());
      } else {
        pe.symbol = read_symbol();
        pe.symbol_alignment = read_alignment();
      }
      pending_.push_back(std::move(pe));
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int next_id_ = 0;
  std::map<int, std::pair<std::string, std::optional<int>>> concepts_;
  std::map<std::string, int> vars_;
  std::vector<PendingEdge> pending_;
};

}  // namespace

AmrGraph read_penman(std::string_view text, const std::vector<std::string>& tokens) {
  AmrGraph g = PenmanParser(text).parse(tokens);
  validate(g, "penman graph");
  return g;
}

std::vector<AmrGraph> read_penman_document(std::istream& in) {
  std::vector<AmrGraph> out;
  std::vector<std::string> tokens;
  std::string block, line;
  long lineno = 0, block_start = 0;
  auto flush = [&] {
    if (block.find_first_not_of(" \t\r\n") == std::string::npos) {
      block.clear();
      return;
    }
    try {
      out.push_back(read_penman(block, tokens));
    } catch (const ParseError& e) {
      throw ParseError("graph starting at line " + std::to_string(block_start) + ": " + e.what(),
                       block_start);
    } catch (const ValidationError& e) {
      throw ValidationError("graph starting at line " + std::to_string(block_start) + ": " + e.what());
    }
    block.clear();
    tokens.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) {
      flush();
      continue;
    }
    if (line[first] == '#') {
      const std::string tag = "# ::tok ";
      if (line.compare(first, tag.size(), tag) == 0) {
        std::istringstream ts(line.substr(first + tag.size()));
        tokens.clear();
        for (std::string t; ts >> t;) tokens.push_back(t);
      }
      continue;
    }
    if (block.empty()) block_start = lineno;
    block += line;
    block += '\n';
  }
  flush();
  return out;
}

}  // namespace cleve
