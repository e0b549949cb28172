#include "cleve/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "cleve/corpus_io.hpp"
#include "cleve/errors.hpp"

namespace cleve {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Instance I/O

namespace {

TokenSpan span_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw DataError(std::string(what) + " must be [start, end]");
  return {j[0].get<int>(), j[1].get<int>()};
}

void check_span(const TokenSpan& s, std::size_t n, const char* what) {
  if (s.start < 0 || s.end <= s.start || static_cast<std::size_t>(s.end) > n)
    throw ValidationError(std::string(what) + " span out of range");
}

}  // namespace

std::vector<SupervisedInstance> read_instances_jsonl(std::istream& in) {
  std::vector<SupervisedInstance> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SupervisedInstance inst;
    try {
      const json j = json::parse(line);
      inst.tokens = j.at("tokens").get<std::vector<std::string>>();
      inst.trigger = span_from_json(j.at("trigger"), "trigger");
      if (j.contains("argument") && !j["argument"].is_null()) inst.argument = span_from_json(j["argument"], "argument");
      inst.label = j.at("label").get<std::string>();
      if (j.contains("nodes")) {
        json gj{{"tokens", inst.tokens}, {"nodes", j["nodes"]}, {"edges", j.value("edges", json::array())}};
        inst.graph = graph_from_json(gj);
      }
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    const std::string where = "line " + std::to_string(lineno) + ": ";
    try {
      check_span(inst.trigger, inst.tokens.size(), "trigger");
      if (inst.argument) {
        check_span(*inst.argument, inst.tokens.size(), "argument");
        if (inst.argument->overlaps(inst.trigger)) throw ValidationError("argument overlaps trigger");
      }
      if (inst.graph) validate(*inst.graph, "graph");
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<SupervisedInstance> read_instances_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_instances_jsonl(in);
}

void write_instances_jsonl(const std::vector<SupervisedInstance>& instances, std::ostream& out) {
  for (const auto& inst : instances) {
    nlohmann::ordered_json j;
    j["tokens"] = inst.tokens;
    j["trigger"] = {inst.trigger.start, inst.trigger.end};
    j["argument"] = inst.argument ? json::array({inst.argument->start, inst.argument->end}) : json(nullptr);
    j["label"] = inst.label;
    if (inst.graph) {
      const json gj = graph_to_json(*inst.graph);
      j["nodes"] = gj["nodes"];
      j["edges"] = gj["edges"];
    }
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Pooling and head

namespace {

void check_splits(Eigen::Index n, const std::vector<int>& splits) {
  if (splits.empty()) throw std::invalid_argument("dynamic_multi_pooling: no split positions");
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] < 0 || splits[i] >= n) throw std::invalid_argument("dynamic_multi_pooling: split out of range");
    if (i > 0 && splits[i] < splits[i - 1]) throw std::invalid_argument("dynamic_multi_pooling: splits not sorted");
  }
}

}  // namespace

RowVector dynamic_multi_pooling(const Matrix& x, const std::vector<int>& splits) {
  check_splits(x.rows(), splits);
  const Eigen::Index d = x.cols();
  RowVector out = RowVector::Zero(d * static_cast<Eigen::Index>(splits.size() + 1));
  Eigen::Index begin = 0;
  for (std::size_t s = 0; s <= splits.size(); ++s) {
    const Eigen::Index end = s < splits.size() ? splits[s] + 1 : x.rows();
    if (end > begin) out.segment(static_cast<Eigen::Index>(s) * d, d) = x.middleRows(begin, end - begin).colwise().maxCoeff();
    begin = std::max(begin, end);
  }
  return out;
}

ad::Var dynamic_multi_pooling(ad::Var x, const std::vector<int>& splits) {
  check_splits(x.rows(), splits);
  ad::Tape& tape = *x.tape();
  std::vector<ad::Var> parts;
  Eigen::Index begin = 0;
  for (std::size_t s = 0; s <= splits.size(); ++s) {
    const Eigen::Index end = s < splits.size() ? splits[s] + 1 : x.rows();
    parts.push_back(end > begin ? ad::max_rows(x, begin, end) : tape.constant(Matrix::Zero(1, x.cols())));
    begin = std::max(begin, end);
  }
  return ad::concat_cols(parts);
}

RowVector instance_embedding(const RowVector& x_sem, const RowVector& g_str) {
  RowVector out(x_sem.size() + g_str.size());
  out << x_sem, g_str;
  return out;
}

ClassifierHead::ClassifierHead(int input_dim, int hidden_dim, int classes, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || classes < 2) throw ConfigError("classifier head: invalid sizes");
  auto rng = derive_rng(seed, {71});
  params_.add("head.w1", random_normal(input_dim, hidden_dim, 1.0 / std::sqrt(input_dim), rng));
  params_.add("head.b1", Matrix::Zero(1, hidden_dim));
  params_.add("head.w2", random_normal(hidden_dim, classes, 1.0 / std::sqrt(hidden_dim), rng));
  params_.add("head.b2", Matrix::Zero(1, classes));
}

ClassifierHead::ClassifierHead(const ParameterSet& params) {
  for (const char* n : {"head.w1", "head.b1", "head.w2", "head.b2"}) {
    if (!params.contains(n)) throw DataError(std::string("checkpoint lacks ") + n);
    params_.add(n, params.at(n));
  }
}

ad::Var ClassifierHead::logits(const std::vector<ad::Var>& bound, ad::Var embedding) const {
  if (embedding.cols() != input_dim()) throw std::invalid_argument("classifier head: embedding size mismatch");
  ad::Var h = ad::tanh(ad::add_row(ad::matmul(embedding, bound[0]), bound[1]));
  return ad::add_row(ad::matmul(h, bound[2]), bound[3]);
}

RowVector ClassifierHead::classify(const RowVector& embedding) const {
  ad::Tape tape(false);
  auto bound = bind(tape, params_, false);
  return ad::softmax_rows(logits(bound, tape.constant(embedding))).value();
}

// ---------------------------------------------------------------------------
// Fine-tuning

std::optional<int> match_node(const AmrGraph& g, const TokenSpan& span) {
  std::optional<int> best;
  int best_overlap = 0;
  for (const auto& n : g.nodes) {
    if (!n.span) continue;
    if (*n.span == span) return n.id;
    const int ov = std::min(n.span->end, span.end) - std::max(n.span->start, span.start);
    if (ov > best_overlap) {
      best_overlap = ov;
      best = n.id;
    }
  }
  return best;
}

ad::Var instance_features(const TextEncoder& text, const std::vector<ad::Var>& bt, const GraphEncoder& graph,
                          const std::vector<ad::Var>& bg, const SupervisedInstance& inst, FeatureSet features,
                          std::mt19937_64* dropout_rng) {
  ad::Tape& tape = *bt.front().tape();
  std::vector<ad::Var> parts;
  if (features != FeatureSet::kStructureOnly) {
    std::vector<TokenSpan> spans{inst.trigger};
    if (inst.argument) spans.push_back(*inst.argument);
    const Truncation tr = truncate_marked(insert_markers(inst.tokens, spans), text.config().max_len);
    const std::vector<int> ids = text.to_ids(tr.tokens);
    ad::Var out = text.forward(tape, bt, ids, static_cast<int>(ids.size()));
    std::set<int> marker_rows;
    for (const auto& m : tr.markers)
      if (m) marker_rows.insert({m->open, m->close});
    std::vector<int> token_rows;
    for (int i = 0; i < static_cast<int>(ids.size()); ++i)
      if (!marker_rows.count(i)) token_rows.push_back(i);
    ad::Var x = ad::rows(out, token_rows);
    const int last = static_cast<int>(token_rows.size()) - 1;
    std::vector<int> splits;
    for (const auto& s : spans) splits.push_back(std::min(s.start, last));
    std::sort(splits.begin(), splits.end());
    parts.push_back(dynamic_multi_pooling(x, splits));
  }
  if (features != FeatureSet::kSemanticOnly) {
    const TokenSpan& candidate = inst.argument ? *inst.argument : inst.trigger;
    std::optional<int> node = inst.graph ? match_node(*inst.graph, candidate) : std::nullopt;
    if (node) {
      ad::Var xn = encode_nodes(tape, text, bt, *inst.graph);
      auto [lg, positions] = one_hop(*inst.graph, *node);
      parts.push_back(graph.forward(bg, lg, ad::rows(xn, positions), dropout_rng));
    } else {
      parts.push_back(tape.constant(Matrix::Zero(1, graph.config().hidden)));
    }
  }
  return ad::concat_cols(parts);
}

double micro_f1(const std::vector<int>& pred, const std::vector<int>& gold, const std::vector<std::string>& labels) {
  if (pred.size() != gold.size()) throw std::invalid_argument("micro_f1: size mismatch");
  auto positive = [&](int c) {
    return c >= 0 && static_cast<std::size_t>(c) < labels.size() && labels[static_cast<std::size_t>(c)] != "None";
  };
  // Gold labels unseen in training (-1) still count as positives to recall.
  long correct = 0, predicted = 0, actual = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool gold_pos = gold[i] < 0 || positive(gold[i]);
    if (positive(pred[i])) ++predicted;
    if (gold_pos) ++actual;
    if (positive(pred[i]) && pred[i] == gold[i]) ++correct;
  }
  if (correct == 0) return 0.0;
  const double p = static_cast<double>(correct) / static_cast<double>(predicted);
  const double r = static_cast<double>(correct) / static_cast<double>(actual);
  return 2.0 * p * r / (p + r);
}

std::vector<int> predict(const FinetuneModel& model, const std::vector<SupervisedInstance>& instances, Exec exec) {
  return map_indexed(
      instances.size(),
      [&](std::size_t i) {
        ad::Tape tape(false);
        auto bt = bind(tape, model.text.params(), false);
        auto bg = bind(tape, model.graph.params(), false);
        auto bh = bind(tape, model.head.params(), false);
        ad::Var emb = instance_features(model.text, bt, model.graph, bg, instances[i], model.features);
        const Matrix& logits = model.head.logits(bh, emb).value();
        Eigen::Index arg;
        logits.row(0).maxCoeff(&arg);
        return static_cast<int>(arg);
      },
      exec);
}

namespace {

struct InstanceGrad {
  double loss = 0.0;
  Gradients text, graph, head;
};

std::vector<int> encode_labels(const std::vector<SupervisedInstance>& xs, const std::vector<std::string>& labels) {
  std::vector<int> out;
  for (const auto& x : xs) {
    auto it = std::lower_bound(labels.begin(), labels.end(), x.label);
    out.push_back(it != labels.end() && *it == x.label ? static_cast<int>(it - labels.begin()) : -1);
  }
  return out;
}

}  // namespace

FinetuneModel finetune(const std::vector<SupervisedInstance>& train, const std::vector<SupervisedInstance>& dev,
                       TextEncoder text, GraphEncoder graph, const FinetuneConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty()) throw DataError("fine-tuning: empty training set");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("fine-tuning: invalid batch size or epoch count");
  std::set<std::string> label_set;
  for (const auto& x : train) label_set.insert(x.label);
  if (label_set.size() < 2) throw DataError("fine-tuning: training data has fewer than two classes");
  const bool eae = train.front().argument.has_value();
  for (const auto* set : {&train, &dev})
    for (const auto& x : *set)
      if (x.argument.has_value() != eae)
        throw DataError("fine-tuning: instances mix trigger-only and trigger+argument inputs");
  if (graph.config().input_dim != text.config().dim) throw ConfigError("graph encoder input does not match text encoder");

  std::vector<std::string> labels(label_set.begin(), label_set.end());
  const int sem_dim = (eae ? 3 : 2) * text.config().dim;
  const int input_dim = (cfg.features == FeatureSet::kStructureOnly ? 0 : sem_dim) +
                        (cfg.features == FeatureSet::kSemanticOnly ? 0 : graph.config().hidden);
  ClassifierHead head(input_dim, cfg.hidden_dim, static_cast<int>(labels.size()), cfg.seed);
  FinetuneModel model{text, graph, head, labels, cfg.features, {}, 0};

  const std::vector<int> y_train = encode_labels(train, labels);
  const auto& selection = dev.empty() ? train : dev;
  const std::vector<int> y_sel = encode_labels(selection, labels);

  FinetuneModel current = model;
  Adam text_opt(current.text.params(), cfg.adam), graph_opt(current.graph.params(), cfg.adam),
      head_opt(current.head.params(), cfg.adam);
  double best_f1 = micro_f1(predict(current, selection, cfg.exec), y_sel, labels);

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = derive_rng(cfg.seed, {61, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      auto grads = map_indexed(
          stop - start,
          [&](std::size_t k) {
            const std::size_t idx = order[start + k];
            ad::Tape tape;
            auto bt = bind(tape, current.text.params());
            auto bg = bind(tape, current.graph.params());
            auto bh = bind(tape, current.head.params());
            auto drop = derive_rng(cfg.seed, {62, static_cast<std::uint64_t>(epoch), idx});
            ad::Var emb = instance_features(current.text, bt, current.graph, bg, train[idx], cfg.features, &drop);
            ad::Var loss = ad::cross_entropy(current.head.logits(bh, emb), y_train[idx]);
            tape.backward(loss);
            return InstanceGrad{loss.scalar(), collect(tape, bt), collect(tape, bg), collect(tape, bh)};
          },
          cfg.exec);
      Gradients gt = zero_gradients(current.text.params()), gg = zero_gradients(current.graph.params()),
                gh = zero_gradients(current.head.params());
      for (const auto& r : grads) {
        epoch_loss += r.loss;
        accumulate(gt, r.text);
        accumulate(gg, r.graph);
        accumulate(gh, r.head);
      }
      const double inv = 1.0 / static_cast<double>(grads.size());
      for (auto* g : {&gt, &gg, &gh})
        for (auto& m : *g) m *= inv;
      text_opt.step(current.text.params(), gt, cfg.learning_rate);
      graph_opt.step(current.graph.params(), gg, cfg.learning_rate);
      head_opt.step(current.head.params(), gh, cfg.learning_rate);
    }
    if (!std::isfinite(epoch_loss)) throw NumericError("fine-tuning: non-finite loss in epoch " + std::to_string(epoch));
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train.size()),
                    micro_f1(predict(current, selection, cfg.exec), y_sel, labels)};
    current.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_f1 > best_f1) {
      best_f1 = rec.val_f1;
      model.text = current.text;
      model.graph = current.graph;
      model.head = current.head;
      model.best_epoch = epoch;
    }
  }
  model.history = current.history;
  return model;
}

// ---------------------------------------------------------------------------
// Liberal event extraction

namespace {

struct LocalCandidates {
  std::vector<int> triggers, arguments;                    // node ids
  std::vector<RowVector> trigger_vecs, argument_vecs;      // E_g
  std::vector<std::map<std::string, RowVector>> relation;  // E_r per trigger
  std::vector<RowVector> structure;                        // E_R per trigger
};

LocalCandidates sentence_candidates(const AmrGraph& g, const TextEncoder& text, const GraphEncoder* graph) {
  LocalCandidates out;
  const Candidates cand = identify_candidates(g);
  out.triggers = cand.triggers;
  out.arguments = cand.arguments;
  if (cand.triggers.empty() && cand.arguments.empty()) return out;
  const Matrix x = node_vectors(text, g);
  for (int t : cand.triggers) out.trigger_vecs.push_back(x.row(g.index_of(t)));
  for (int a : cand.arguments) out.argument_vecs.push_back(x.row(g.index_of(a)));
  if (graph == nullptr) {
    out.relation.resize(cand.triggers.size());
    out.structure.resize(cand.triggers.size());
    return out;
  }
  const RowVector whole = encode_graph(*graph, g, x);
  std::map<int, RowVector> hop_cache;
  for (int t : cand.triggers) {
    std::map<std::string, std::pair<RowVector, int>> acc;
    for (const auto& e : g.edges) {
      if (e.src != t || !core_relation(e.rel)) continue;
      auto it = hop_cache.find(e.dst);
      if (it == hop_cache.end()) it = hop_cache.emplace(e.dst, one_hop_embedding(*graph, g, x, e.dst)).first;
      auto [slot, fresh] = acc.try_emplace(e.rel, RowVector::Zero(it->second.size()), 0);
      slot->second.first += it->second;
      ++slot->second.second;
    }
    std::map<std::string, RowVector> rel;
    for (auto& [r, sum_count] : acc) rel.emplace(r, sum_count.first / sum_count.second);
    out.relation.push_back(std::move(rel));
    out.structure.push_back(whole);
  }
  return out;
}

nlohmann::ordered_json cluster_summary(const std::vector<CandidateRef>& refs, const std::vector<CandidateContext>& ctx,
                                       const ClusterAssignment& c, const std::vector<AmrGraph>& corpus, int top) {
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (int k = 0; k < c.k; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < c.labels.size(); ++i)
      if (c.labels[i] == k) members.push_back(i);
    RowVector centroid = RowVector::Zero(ctx.front().semantic.size());
    for (std::size_t i : members) centroid += ctx[i].semantic;
    if (!members.empty()) centroid /= static_cast<double>(members.size());
    std::vector<std::pair<double, std::size_t>> by_distance;
    for (std::size_t i : members) by_distance.emplace_back((ctx[i].semantic - centroid).squaredNorm(), i);
    std::sort(by_distance.begin(), by_distance.end());
    std::vector<std::string> exemplars;
    for (const auto& [d, i] : by_distance) {
      if (static_cast<int>(exemplars.size()) >= top) break;
      const std::string text = node_text(corpus[static_cast<std::size_t>(refs[i].sentence)], refs[i].node);
      if (std::find(exemplars.begin(), exemplars.end(), text) == exemplars.end()) exemplars.push_back(text);
    }
    clusters.push_back({{"id", k}, {"size", members.size()}, {"exemplars", exemplars}});
  }
  return clusters;
}

}  // namespace

LiberalInputs build_liberal_inputs(const std::vector<AmrGraph>& corpus, const TextEncoder& text,
                                   const GraphEncoder* graph, Exec exec) {
  auto local = map_indexed(corpus.size(), [&](std::size_t s) { return sentence_candidates(corpus[s], text, graph); }, exec);
  LiberalInputs in;
  std::map<std::pair<int, int>, int> trigger_index, argument_index;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const int si = static_cast<int>(s);
    for (std::size_t i = 0; i < local[s].triggers.size(); ++i) {
      trigger_index.emplace(std::make_pair(si, local[s].triggers[i]), static_cast<int>(in.triggers.size()));
      in.triggers.push_back({si, local[s].triggers[i]});
      CandidateContext c;
      c.owner = "trigger";
      c.semantic = local[s].trigger_vecs[i];
      c.relation_structure = std::move(local[s].relation[i]);
      c.structure = std::move(local[s].structure[i]);
      in.trigger_contexts.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < local[s].arguments.size(); ++i) {
      argument_index.emplace(std::make_pair(si, local[s].arguments[i]), static_cast<int>(in.arguments.size()));
      in.arguments.push_back({si, local[s].arguments[i]});
      CandidateContext c;
      c.owner = "argument";
      c.semantic = local[s].argument_vecs[i];
      in.argument_contexts.push_back(std::move(c));
    }
  }
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const int si = static_cast<int>(s);
    for (const auto& e : corpus[s].edges) {
      if (!core_relation(e.rel)) continue;
      const int t = trigger_index.at({si, e.src}), a = argument_index.at({si, e.dst});
      in.trigger_contexts[static_cast<std::size_t>(t)].links.push_back({e.rel, a});
      in.argument_contexts[static_cast<std::size_t>(a)].links.push_back({e.rel, t});
    }
  }
  return in;
}

LiberalResult liberal_pipeline(const std::vector<AmrGraph>& corpus, const TextEncoder& text,
                               const GraphEncoder* graph, const LiberalConfig& cfg) {
  if (corpus.empty()) throw DataError("liberal pipeline: empty corpus");
  LiberalResult r;
  r.inputs = build_liberal_inputs(corpus, text, cfg.clustering.use_structure ? graph : nullptr, cfg.exec);
  if (r.inputs.triggers.empty() || r.inputs.arguments.empty())
    throw DataError("liberal pipeline: no trigger/argument candidates in the corpus");
  r.clustering = joint_cluster(r.inputs.trigger_contexts, r.inputs.argument_contexts, cfg.clustering);

  r.output["K_T"] = r.clustering.kt;
  r.output["K_A"] = r.clustering.ka;
  r.output["O"] = r.clustering.objective;
  nlohmann::ordered_json tj = nlohmann::ordered_json::object(), aj = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.inputs.triggers.size(); ++i) tj[r.inputs.triggers[i].id()] = r.clustering.triggers.labels[i];
  for (std::size_t i = 0; i < r.inputs.arguments.size(); ++i)
    aj[r.inputs.arguments[i].id()] = r.clustering.arguments.labels[i];
  r.output["triggers"] = std::move(tj);
  r.output["arguments"] = std::move(aj);

  r.schema["clusters"] =
      cluster_summary(r.inputs.triggers, r.inputs.trigger_contexts, r.clustering.triggers, corpus, cfg.exemplars);
  r.schema["argument_clusters"] =
      cluster_summary(r.inputs.arguments, r.inputs.argument_contexts, r.clustering.arguments, corpus, cfg.exemplars);
  return r;
}

}  // namespace cleve
