#include "cleve/amr_graph.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "cleve/errors.hpp"

namespace cleve {

namespace {

bool all_digits(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Iterative three-colour DFS over positions; true if a directed cycle exists.
bool has_cycle(std::size_t n, const std::vector<std::vector<int>>& out) {
  std::vector<std::uint8_t> colour(n, 0);
  std::vector<std::pair<int, std::size_t>> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (colour[s] != 0) continue;
    stack.emplace_back(static_cast<int>(s), 0);
    colour[s] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < out[v].size()) {
        int w = out[v][next++];
        if (colour[w] == 1) return true;
        if (colour[w] == 0) {
          colour[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        colour[v] = 2;
        stack.pop_back();
      }
    }
  }
  return false;
}

}  // namespace

int AmrGraph::index_of(int id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const AmrNode& AmrGraph::node(int id) const {
  int i = index_of(id);
  if (i < 0) throw ValidationError("unknown node id " + std::to_string(id));
  return nodes[i];
}

std::vector<int> AmrGraph::roots() const {
  std::set<int> has_incoming;
  for (const auto& e : edges) has_incoming.insert(e.dst);
  std::vector<int> out;
  for (const auto& n : nodes)
    if (!has_incoming.count(n.id)) out.push_back(n.id);
  return out;
}

std::vector<std::vector<int>> AmrGraph::undirected_neighbors() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& e : edges) {
    int s = index_of(e.src), d = index_of(e.dst);
    if (s < 0 || d < 0 || s == d) continue;
    adj[s].push_back(e.dst);
    adj[d].push_back(e.src);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

void validate(const AmrGraph& g, const std::string& name) {
  std::unordered_map<int, int> pos;
  const int n_tok = static_cast<int>(g.tokens.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& nd = g.nodes[i];
    if (!pos.emplace(nd.id, static_cast<int>(i)).second)
      throw ValidationError(name + ": duplicate node id " + std::to_string(nd.id));
    if (nd.span) {
      if (nd.span->start < 0 || nd.span->end <= nd.span->start || nd.span->end > n_tok)
        throw ValidationError(name + ": node " + std::to_string(nd.id) + " has span [" +
                              std::to_string(nd.span->start) + "," + std::to_string(nd.span->end) +
                              ") outside " + std::to_string(n_tok) + " tokens");
    }
  }
  std::vector<std::vector<int>> out(g.nodes.size());
  for (const auto& e : g.edges) {
    auto s = pos.find(e.src), d = pos.find(e.dst);
    if (s == pos.end() || d == pos.end())
      throw ValidationError(name + ": dangling edge " + std::to_string(e.src) + "->" +
                            std::to_string(e.dst));
    if (e.src == e.dst) throw ValidationError(name + ": self loop on node " + std::to_string(e.src));
    out[s->second].push_back(d->second);
  }
  if (has_cycle(g.nodes.size(), out)) throw ValidationError(name + ": edges contain a directed cycle");
}

bool is_entity_link(std::string_view rel) {
  if (rel == "name") return true;
  return rel.size() > 2 && rel.substr(0, 2) == "op" && all_digits(rel.substr(2));
}

bool core_relation(std::string_view rel) {
  if (rel == "time" || rel == "location") return true;
  return rel.substr(0, 3) == "ARG" && all_digits(rel.substr(3));
}

AmrGraph merge_entity_nodes(const AmrGraph& g, std::vector<std::string>* warnings) {
  const std::size_t n = g.nodes.size();
  // Union-find over positions, joined by entity links.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<bool> has_entity_in(n, false);
  bool any = false;
  for (const auto& e : g.edges) {
    if (!is_entity_link(e.rel)) continue;
    int s = g.index_of(e.src), d = g.index_of(e.dst);
    if (s < 0 || d < 0) continue;
    any = true;
    has_entity_in[d] = true;
    int rs = find(s), rd = find(d);
    if (rs != rd) parent[std::max(rs, rd)] = std::min(rs, rd);
  }
  if (!any) return g;

  std::map<int, std::vector<int>> members;  // representative -> positions
  for (std::size_t i = 0; i < n; ++i) members[find(static_cast<int>(i))].push_back(static_cast<int>(i));

  // Head: first member (node order) with no incoming entity link.
  std::vector<int> head_of(n);
  for (const auto& [rep, ms] : members) {
    int head = ms.front();
    for (int m : ms)
      if (!has_entity_in[m]) {
        head = m;
        break;
      }
    for (int m : ms) head_of[m] = head;
  }

  AmrGraph out;
  out.tokens = g.tokens;
  for (std::size_t i = 0; i < n; ++i) {
    if (head_of[i] != static_cast<int>(i)) continue;
    AmrNode nd = g.nodes[i];
    const auto& ms = members[find(static_cast<int>(i))];
    if (ms.size() > 1) {
      for (int m : ms) {
        if (m == static_cast<int>(i)) continue;
        const auto& other = g.nodes[m];
        nd.merged_from.push_back(other.id);
        nd.merged_from.insert(nd.merged_from.end(), other.merged_from.begin(), other.merged_from.end());
        if (other.span) {
          if (nd.span) {
            nd.span->start = std::min(nd.span->start, other.span->start);
            nd.span->end = std::max(nd.span->end, other.span->end);
          } else {
            nd.span = other.span;
          }
        }
      }
      std::sort(nd.merged_from.begin(), nd.merged_from.end());
    }
    out.nodes.push_back(std::move(nd));
  }

  // Re-target edges; drop self loops and cycle-closing edges, dedupe by (src, dst, rel).
  const std::size_t m = out.nodes.size();
  std::unordered_map<int, int> out_pos;
  for (std::size_t i = 0; i < m; ++i) out_pos[out.nodes[i].id] = static_cast<int>(i);
  std::vector<std::vector<int>> adj(m);
  auto reachable = [&](int from, int to) {
    std::vector<bool> seen(m, false);
    std::vector<int> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (v == to) return true;
      for (int w : adj[v])
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
    }
    return false;
  };
  std::set<AmrEdge> seen_edges;
  for (const auto& e : g.edges) {
    int s = g.index_of(e.src), d = g.index_of(e.dst);
    if (s < 0 || d < 0) continue;
    AmrEdge re{g.nodes[head_of[s]].id, g.nodes[head_of[d]].id, e.rel};
    if (re.src == re.dst) {
      if (!is_entity_link(e.rel) && warnings)
        warnings->push_back("dropped self loop " + std::to_string(e.src) + "-" + e.rel + "->" +
                            std::to_string(e.dst) + " after merging");
      continue;
    }
    if (!seen_edges.insert(re).second) continue;
    int ps = out_pos[re.src], pd = out_pos[re.dst];
    if (reachable(pd, ps)) {
      if (warnings)
        warnings->push_back("dropped cycle-closing edge " + std::to_string(re.src) + "-" + re.rel +
                            "->" + std::to_string(re.dst) + " after merging");
      continue;
    }
    adj[ps].push_back(pd);
    out.edges.push_back(std::move(re));
  }
  return out;
}

PairSet positive_pairs(const AmrGraph& g) {
  std::set<NodePair> pairs;
  for (const auto& e : g.edges)
    if (core_relation(e.rel)) pairs.emplace(e.src, e.dst);
  return PairSet{{pairs.begin(), pairs.end()}};
}

bool has_core_edge(const AmrGraph& g, int src, int dst) {
  return std::any_of(g.edges.begin(), g.edges.end(), [&](const AmrEdge& e) {
    return e.src == src && e.dst == dst && core_relation(e.rel);
  });
}

std::vector<NegativeSample> sample_negatives(const AmrGraph& g, NodePair pair, int m_t, int m_a,
                                             std::mt19937_64& rng) {
  const auto [t, a] = pair;
  std::vector<int> trig_pool, arg_pool;
  for (const auto& nd : g.nodes) {
    if (nd.id == t || nd.id == a) continue;
    if (!has_core_edge(g, nd.id, a)) trig_pool.push_back(nd.id);
    if (!has_core_edge(g, t, nd.id)) arg_pool.push_back(nd.id);
  }
  // Partial Fisher-Yates: the first k entries become a uniform k-subset.
  auto draw = [&rng](std::vector<int>& pool, int k) {
    const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(k, 0)));
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(take);
  };
  draw(trig_pool, m_t);
  draw(arg_pool, m_a);
  std::vector<NegativeSample> out;
  out.reserve(trig_pool.size() + arg_pool.size());
  for (int n : trig_pool) out.push_back({{n, a}, Replaced::kTrigger});
  for (int n : arg_pool) out.push_back({{t, n}, Replaced::kArgument});
  return out;
}

Candidates identify_candidates(const AmrGraph& g) {
  std::set<int> trig, arg;
  for (const auto& e : g.edges) {
    if (!core_relation(e.rel)) continue;
    trig.insert(e.src);
    arg.insert(e.dst);
  }
  Candidates c;
  for (const auto& nd : g.nodes) {
    if (trig.count(nd.id)) c.triggers.push_back(nd.id);
    if (arg.count(nd.id)) c.arguments.push_back(nd.id);
  }
  return c;
}

std::string node_text(const AmrGraph& g, int id) {
  const auto& nd = g.node(id);
  if (!nd.span) return nd.concept_label;
  std::string s;
  for (int i = nd.span->start; i < nd.span->end; ++i) {
    if (!s.empty()) s += ' ';
    s += g.tokens[i];
  }
  return s;
}

}  // namespace cleve
