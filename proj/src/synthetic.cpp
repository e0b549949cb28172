#include "cleve/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "cleve/errors.hpp"
#include "cleve/params.hpp"

namespace cleve {

namespace {

const std::vector<std::string> kTriggerClassNames{"attack", "transport", "meet", "transaction"};
const std::vector<std::string> kArgumentClassNames{"person", "place", "object"};

const std::vector<std::vector<std::string>> kVerbs{
    {"attack", "strike", "bomb", "raid", "assault", "shoot", "invade", "ambush"},
    {"travel", "move", "drive", "fly", "ship", "sail", "transport", "carry"},
    {"meet", "visit", "greet", "gather", "negotiate", "confer", "host", "join"},
    {"pay", "buy", "sell", "donate", "lend", "fund", "rent", "trade"},
};
const std::vector<std::vector<std::string>> kNouns{
    {"soldier", "doctor", "farmer", "pilot", "teacher", "minister", "banker", "student"},
    {"city", "village", "harbor", "airport", "capital", "border", "market", "campus"},
    {"weapon", "truck", "cargo", "money", "grain", "contract", "ticket", "loan"},
};
const std::vector<std::string> kAdjectives{"big", "old", "new", "local", "small", "young", "foreign", "rich"};

struct Slot {
  std::string rel;
  int argument_class;
  bool required;
};

// Relation pattern per trigger class; the first slot is the subject. Every
// class pairs with a different set of argument classes, so a trigger's class
// is recoverable from which nouns it takes.
const std::vector<std::vector<Slot>> kPatterns{
    {{"ARG0", 0, true}, {"ARG1", 1, true}},
    {{"ARG1", 2, true}, {"ARG2", 1, true}},
    {{"ARG0", 0, true}, {"ARG1", 0, true}},
    {{"ARG0", 0, true}, {"ARG1", 2, true}, {"ARG2", 0, false}},
};

std::string preposition(const std::string& rel) {
  if (rel == "location") return "in";
  if (rel == "ARG2") return "to";
  return "";
}

template <typename T>
const T& pick(const std::vector<T>& v, std::size_t limit, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> u(0, std::min(limit, v.size()) - 1);
  return v[u(rng)];
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticConfig& cfg) {
  if (cfg.sentences < 1) throw ConfigError("synthetic corpus: need at least one sentence");
  if (cfg.trigger_classes < 1 || cfg.trigger_classes > static_cast<int>(kVerbs.size()))
    throw ConfigError("synthetic corpus: trigger_classes must be in [1, 4]");
  if (cfg.argument_classes != static_cast<int>(kNouns.size()))
    throw ConfigError("synthetic corpus: the relation patterns use exactly 3 argument classes");
  if (cfg.words_per_class < 1 || cfg.words_per_class > 8) throw ConfigError("synthetic corpus: words_per_class in [1, 8]");

  const auto w = static_cast<std::size_t>(cfg.words_per_class);
  // Verb lists; with sharing, the first few verbs of class c also belong to
  // class c+1.
  std::vector<std::vector<std::string>> verbs(static_cast<std::size_t>(cfg.trigger_classes));
  const auto shared = static_cast<std::size_t>(std::lround(cfg.shared_verb_fraction * static_cast<double>(w)));
  for (int c = 0; c < cfg.trigger_classes; ++c) {
    const auto& own = kVerbs[static_cast<std::size_t>(c)];
    verbs[static_cast<std::size_t>(c)].assign(own.begin(), own.begin() + static_cast<long>(w));
    if (cfg.trigger_classes > 1 && shared > 0) {
      const auto& prev = kVerbs[static_cast<std::size_t>((c + cfg.trigger_classes - 1) % cfg.trigger_classes)];
      for (std::size_t i = 0; i < shared && i < w; ++i) verbs[static_cast<std::size_t>(c)][w - 1 - i] = prev[i];
    }
  }

  SyntheticCorpus out;
  auto rng = derive_rng(cfg.seed, {81});
  std::bernoulli_distribution second(cfg.second_event_probability), slot_on(cfg.slot_probability),
      modifier(cfg.modifier_probability), article(0.5);
  std::uniform_int_distribution<int> trigger_class(0, cfg.trigger_classes - 1);

  std::bernoulli_distribution scramble(cfg.scramble_probability);

  // A noun phrase before placement: tokens are emitted once the sentence
  // layout is final.
  struct NounPhrase {
    int node = 0;
    std::optional<int> mod;
    std::string prep, adjective, noun;
    bool article = false;
  };
  // Sentence layout item: a plain word, a verb node, or a noun phrase slot.
  struct Item {
    std::string word;
    int verb_node = -1;
    int phrase = -1;
  };

  for (int s = 0; s < cfg.sentences; ++s) {
    AmrGraph g;
    int next_id = 0;
    std::vector<int> classes{trigger_class(rng)};
    if (cfg.trigger_classes > 1 && second(rng)) {
      int c2;
      do c2 = trigger_class(rng);
      while (c2 == classes[0]);
      classes.push_back(c2);
    }
    std::vector<std::string> used_nouns;
    std::vector<NounPhrase> phrases;
    std::vector<Item> layout;
    std::map<int, std::string> verb_concepts;
    for (std::size_t e = 0; e < classes.size(); ++e) {
      if (e > 0) layout.push_back({"and", -1, -1});
      const int c = classes[e];
      const int trig = next_id++;
      verb_concepts[trig] = pick(verbs[static_cast<std::size_t>(c)], w, rng);
      out.trigger_gold[std::to_string(s) + ":" + std::to_string(trig)] = kTriggerClassNames[static_cast<std::size_t>(c)];

      auto noun_phrase = [&](const Slot& slot) {
        NounPhrase np;
        np.prep = preposition(slot.rel);
        np.article = article(rng);
        np.node = next_id++;
        if (modifier(rng)) {
          np.mod = next_id++;
          np.adjective = pick(kAdjectives, kAdjectives.size(), rng);
        }
        do np.noun = pick(kNouns[static_cast<std::size_t>(slot.argument_class)], w, rng);
        while (w > 2 && std::find(used_nouns.begin(), used_nouns.end(), np.noun) != used_nouns.end());
        used_nouns.push_back(np.noun);
        g.edges.push_back({trig, np.node, slot.rel});
        if (np.mod) g.edges.push_back({np.node, *np.mod, "mod"});
        out.argument_gold[std::to_string(s) + ":" + std::to_string(np.node)] =
            kArgumentClassNames[static_cast<std::size_t>(slot.argument_class)];
        layout.push_back({"", -1, static_cast<int>(phrases.size())});
        phrases.push_back(std::move(np));
      };

      const auto& pattern = kPatterns[static_cast<std::size_t>(c)];
      noun_phrase(pattern[0]);  // subject before the verb
      layout.push_back({"", trig, -1});
      for (std::size_t k = 1; k < pattern.size(); ++k)
        if (pattern[k].required || slot_on(rng)) noun_phrase(pattern[k]);
    }
    // Scrambling permutes which phrase fills which slot, so word order no
    // longer tells which trigger an argument belongs to.
    std::vector<int> filler(phrases.size());
    std::iota(filler.begin(), filler.end(), 0);
    if (classes.size() > 1 && scramble(rng)) std::shuffle(filler.begin(), filler.end(), rng);

    auto emit = [&](const std::string& word) {
      g.tokens.push_back(word);
      return static_cast<int>(g.tokens.size()) - 1;
    };
    for (const Item& item : layout) {
      if (!item.word.empty()) {
        emit(item.word);
      } else if (item.verb_node >= 0) {
        const std::string& verb = verb_concepts.at(item.verb_node);
        const int pos = emit(verb);
        g.nodes.push_back({item.verb_node, verb + "-01", TokenSpan{pos, pos + 1}, {}});
      } else {
        const NounPhrase& np = phrases[static_cast<std::size_t>(filler[static_cast<std::size_t>(item.phrase)])];
        if (!np.prep.empty()) emit(np.prep);
        if (np.article) emit("the");
        if (np.mod) {
          const int pos = emit(np.adjective);
          g.nodes.push_back({*np.mod, np.adjective, TokenSpan{pos, pos + 1}, {}});
        }
        const int pos = emit(np.noun);
        g.nodes.push_back({np.node, np.noun, TokenSpan{pos, pos + 1}, {}});
      }
    }
    g.tokens.push_back(".");
    // Node order by id keeps the JSON stable and readable.
    std::sort(g.nodes.begin(), g.nodes.end(), [](const AmrNode& a, const AmrNode& b) { return a.id < b.id; });
    validate(g, "synthetic sentence " + std::to_string(s));
    out.graphs.push_back(std::move(g));
  }
  return out;
}

std::vector<SupervisedInstance> supervised_instances(const SyntheticCorpus& corpus) {
  std::vector<SupervisedInstance> out;
  for (std::size_t s = 0; s < corpus.graphs.size(); ++s) {
    const AmrGraph& g = corpus.graphs[s];
    for (const auto& n : g.nodes) {
      auto it = corpus.trigger_gold.find(std::to_string(s) + ":" + std::to_string(n.id));
      if (it != corpus.trigger_gold.end()) out.push_back({g.tokens, *n.span, std::nullopt, it->second, g});
    }
  }
  return out;
}

}  // namespace cleve
