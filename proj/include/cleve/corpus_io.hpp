#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cleve/amr_graph.hpp"
#include "json.hpp"

namespace cleve {

// Canonical corpus format: JSON Lines, one sentence graph per line.
//   {"tokens": [string], "nodes": [{"id": int, "concept": string,
//    "span": [int,int] | null}], "edges": [{"src": int, "dst": int, "rel": string}]}
// Nodes produced by merging additionally carry "merged_from": [int].

nlohmann::json graph_to_json(const AmrGraph& g);
AmrGraph graph_from_json(const nlohmann::json& j);

/// Reads and validates every line; throws ParseError carrying the 1-based
/// line number, or ValidationError naming "line N".
std::vector<AmrGraph> read_corpus_jsonl(const std::string& path);
std::vector<AmrGraph> read_corpus_jsonl(std::istream& in);

void write_corpus_jsonl(const std::vector<AmrGraph>& corpus, const std::string& path);
void write_corpus_jsonl(const std::vector<AmrGraph>& corpus, std::ostream& out);

/// Parses one PENMAN graph, e.g. "(a / attack~e.3 :ARG0 (s / soldier))".
/// Tokens come from `tokens` when non-empty; otherwise they are synthesized
/// from alignments (aligned concept text at its index, "_" elsewhere).
/// Errors throw ParseError with a 0-based character offset.
AmrGraph read_penman(std::string_view text, const std::vector<std::string>& tokens = {});

/// A sequence of PENMAN graphs separated by blank lines. A "# ::tok" comment
/// preceding a graph supplies its whitespace-separated tokens; other comment
/// lines are skipped.
std::vector<AmrGraph> read_penman_document(std::istream& in);

}  // namespace cleve
