// Command-line driver: preprocess, pretrain, cluster, evaluate, finetune, synth.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric or
// other runtime failure.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cleve/corpus_io.hpp"
#include "cleve/downstream.hpp"
#include "cleve/errors.hpp"
#include "cleve/evaluation.hpp"
#include "cleve/persistence.hpp"
#include "cleve/semantic_pretrain.hpp"
#include "cleve/structure_pretrain.hpp"
#include "cleve/synthetic.hpp"
#include "json.hpp"

using namespace cleve;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads known keys out of a JSON object and rejects whatever is left over,
// reporting the full key path.
class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  ConfigReader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return ConfigReader(it == j_.end() ? empty : *it, path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + path_ + "." + it.key());
  }

 private:
  std::string where() const { return path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

void read_adam(ConfigReader r, AdamConfig& a) {
  r.get("beta1", a.beta1);
  r.get("beta2", a.beta2);
  r.get("eps", a.eps);
  r.finish();
}

void read_encoder(ConfigReader r, EncoderConfig& e) {
  r.get("layers", e.layers);
  r.get("dim", e.dim);
  r.get("heads", e.heads);
  r.get("ffn_dim", e.ffn_dim);
  r.get("relative_window", e.relative_window);
  r.finish();
}

// CLEVE_SEED, when set, replaces every configured seed.
void apply_seed_override(std::uint64_t& seed) {
  if (const char* s = std::getenv("CLEVE_SEED")) {
    try {
      seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CLEVE_SEED is not an unsigned integer: ") + s);
    }
  }
}

SemanticTrainConfig semantic_config(const json& j) {
  SemanticTrainConfig c;
  ConfigReader r(j, "config");
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  read_adam(r.child("adam"), c.adam);
  r.get("m_t", c.m_t);
  r.get("m_a", c.m_a);
  r.get("max_seq_len", c.max_seq_len);
  r.get("steps", c.steps);
  r.get("eval_every", c.eval_every);
  r.get("seed", c.seed);
  read_encoder(r.child("encoder"), c.encoder);
  r.finish();
  c.encoder.max_len = c.max_seq_len;
  apply_seed_override(c.seed);
  return c;
}

// Batch size and step count default to desk scale; every other value keeps
// the library default.
StructureTrainConfig structure_config(const json& j) {
  StructureTrainConfig c;
  c.batch_size = 8;
  c.training_steps = 1000;
  c.warmup_steps = 100;
  ConfigReader r(j, "config");
  r.get("batch_size", c.batch_size);
  r.get("temperature", c.temperature);
  r.get("restart_probability", c.restart_probability);
  r.get("max_walk_steps", c.max_walk_steps);
  r.get("warmup_steps", c.warmup_steps);
  r.get("weight_decay", c.weight_decay);
  r.get("training_steps", c.training_steps);
  r.get("learning_rate", c.learning_rate);
  read_adam(r.child("adam"), c.adam);
  r.get("layers", c.layers);
  r.get("dropout", c.dropout);
  r.get("hidden_dim", c.hidden_dim);
  r.get("seed", c.seed);
  r.finish();
  apply_seed_override(c.seed);
  return c;
}

LiberalConfig cluster_config(const json& j) {
  LiberalConfig c;
  ConfigReader r(j, "config");
  auto& k = c.clustering;
  r.get("kt_min", k.kt_min);
  r.get("kt_max", k.kt_max);
  r.get("ka_min", k.ka_min);
  r.get("ka_max", k.ka_max);
  r.get("lambda", k.lambda);
  r.get("max_iterations", k.max_iterations);
  r.get("kmeans_iterations", k.spectral.kmeans_iterations);
  r.get("kmeans_restarts", k.spectral.kmeans_restarts);
  r.get("seed", k.seed);
  r.get("exemplars", c.exemplars);
  r.finish();
  apply_seed_override(k.seed);
  return c;
}

FinetuneConfig finetune_config(const json& j, EncoderConfig& fresh_text, GraphEncoderConfig& fresh_graph) {
  FinetuneConfig c;
  ConfigReader r(j, "config");
  r.get("batch_size", c.batch_size);
  r.get("epochs", c.epochs);
  r.get("learning_rate", c.learning_rate);
  read_adam(r.child("adam"), c.adam);
  r.get("hidden_dim", c.hidden_dim);
  std::string features = "both";
  r.get("features", features);
  if (features == "both")
    c.features = FeatureSet::kBoth;
  else if (features == "semantic")
    c.features = FeatureSet::kSemanticOnly;
  else if (features == "structure")
    c.features = FeatureSet::kStructureOnly;
  else
    throw ConfigError("config.features must be both, semantic or structure");
  r.get("seed", c.seed);
  // Shapes of encoders built from scratch when no checkpoint is given.
  read_encoder(r.child("encoder"), fresh_text);
  ConfigReader g = r.child("graph");
  g.get("layers", fresh_graph.layers);
  g.get("hidden", fresh_graph.hidden);
  g.get("dropout", fresh_graph.dropout);
  g.finish();
  r.finish();
  apply_seed_override(c.seed);
  return c;
}

std::string vocab_path(const std::string& ckpt) { return ckpt + ".vocab"; }

void write_metadata(const std::string& ckpt, const std::string& command, const json& config) {
  ordered_json meta;
  meta["command"] = command;
  meta["config"] = config;
  meta["created_unix"] = static_cast<long long>(std::time(nullptr));
  std::ofstream out(ckpt + ".meta.json");
  out << meta.dump(2) << "\n";
}

TextEncoder load_text(const std::string& ckpt) {
  if (!std::filesystem::exists(ckpt)) throw DataError("semantic checkpoint " + ckpt + " not found");
  return TextEncoder(Vocabulary::load(vocab_path(ckpt)), load(ckpt).with_prefix("text."));
}

GraphEncoder load_graph(const std::string& ckpt) {
  if (!std::filesystem::exists(ckpt)) throw DataError("structure checkpoint " + ckpt + " not found");
  return GraphEncoder(load(ckpt).with_prefix("gin."));
}

void write_json(const ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

bool looks_like_penman(const std::string& path, const std::string& format) {
  if (format == "penman") return true;
  if (format == "jsonl") return false;
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".penman" || ext == ".amr" || ext == ".txt";
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const std::string& in, const std::string& out, const std::string& format, bool stats) {
  std::vector<AmrGraph> raw;
  if (looks_like_penman(in, format)) {
    std::ifstream f(in);
    if (!f) throw DataError("cannot open " + in);
    raw = read_penman_document(f);
  } else {
    raw = read_corpus_jsonl(in);
  }
  std::vector<AmrGraph> merged;
  std::size_t nodes = 0, edges = 0, absorbed = 0, warnings = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::vector<std::string> w;
    merged.push_back(merge_entity_nodes(raw[i], &w));
    validate(merged.back(), "graph " + std::to_string(i + 1));
    for (const auto& msg : w) std::cerr << "warning: graph " << i + 1 << ": " << msg << "\n";
    warnings += w.size();
    nodes += merged.back().nodes.size();
    edges += merged.back().edges.size();
    for (const auto& n : merged.back().nodes) absorbed += n.merged_from.size();
  }
  write_corpus_jsonl(merged, out);
  std::cout << "graphs " << merged.size() << "\nnodes " << nodes << "\nedges " << edges << "\n";
  if (stats) std::cout << "merged_nodes " << absorbed << "\nwarnings " << warnings << "\n";
  return 0;
}

int cmd_pretrain(const std::string& mode, const std::string& corpus_path, const std::string& config_path,
                 const std::string& out, const std::string& semantic_ckpt, const std::string& loss_csv) {
  const json cfg_json = load_config(config_path);
  if (mode == "structure" && semantic_ckpt.empty())
    throw ConfigError("--mode structure needs --semantic: node features come from the semantic encoder");
  const auto corpus = read_corpus_jsonl(corpus_path);
  std::ofstream csv;
  if (!loss_csv.empty()) {
    csv.open(loss_csv);
    csv << "step,train_loss,val_loss\n";
    csv.precision(17);
  }
  auto log = [&](const LossRecord& r) {
    if (!csv.is_open()) return;
    csv << r.step << "," << r.train_loss << ",";
    if (r.val_loss) csv << *r.val_loss;
    csv << "\n";
  };
  if (mode == "semantic") {
    const auto cfg = semantic_config(cfg_json);
    SemanticModel m = train_semantic(corpus, cfg, log);
    ParameterSet p = m.encoder.checkpoint_params();
    p.merge(m.scorer.params());
    save(p, out);
    m.encoder.vocab().save(vocab_path(out));
    std::cerr << "best step " << m.best_step << "\n";
  } else if (mode == "structure") {
    const auto cfg = structure_config(cfg_json);
    const TextEncoder text = load_text(semantic_ckpt);
    StructureModel m = train_structure(corpus, text, cfg, log);
    save(m.encoder.params(), out);
  } else {
    throw ConfigError("--mode must be semantic or structure");
  }
  write_metadata(out, "pretrain " + mode, cfg_json);
  return 0;
}

int cmd_cluster(const std::string& corpus_path, const std::string& semantic_ckpt, const std::string& structure_ckpt,
                const std::string& config_path, const std::string& out, const std::string& schema_out,
                const std::string& ablate) {
  LiberalConfig cfg = cluster_config(load_config(config_path));
  if (!ablate.empty() && ablate != "structure") throw ConfigError("--ablate accepts only 'structure'");
  const auto corpus = read_corpus_jsonl(corpus_path);
  if (corpus.empty()) throw DataError("corpus " + corpus_path + " is empty");
  const TextEncoder text = load_text(semantic_ckpt);
  std::optional<GraphEncoder> graph;
  if (!structure_ckpt.empty() && ablate != "structure") graph = load_graph(structure_ckpt);
  cfg.clustering.use_structure = graph.has_value();
  LiberalResult r = liberal_pipeline(corpus, text, graph ? &*graph : nullptr, cfg);
  write_json(r.output, out);
  if (!schema_out.empty()) write_json(r.schema, schema_out);
  return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path, const std::string& side) {
  if (side != "triggers" && side != "arguments") throw ConfigError("--side must be triggers or arguments");
  std::ifstream pin(pred_path);
  if (!pin) throw DataError("cannot open " + pred_path);
  json pred_json;
  try {
    pred_json = json::parse(pin);
  } catch (const json::parse_error& e) {
    throw ParseError(pred_path + ": " + e.what(), 1);
  }
  if (!pred_json.contains(side) || !pred_json[side].is_object()) throw DataError(pred_path + " lacks \"" + side + "\"");
  std::map<std::string, int> pred;
  for (auto it = pred_json[side].begin(); it != pred_json[side].end(); ++it) pred[it.key()] = it.value().get<int>();

  std::ifstream gin(gold_path);
  if (!gin) throw DataError("cannot open " + gold_path);
  const std::string want = side == "triggers" ? "trigger" : "argument";
  std::map<std::string, std::string> gold;
  std::string line;
  long lineno = 0;
  while (std::getline(gin, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      if (j.at("type").get<std::string>() == want) gold[j.at("id").get<std::string>()] = j.at("label").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(gold_path + " line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  std::cout << metrics_json(b_cubed(pred, gold)) << "\n";
  return 0;
}

int cmd_finetune(const std::string& train_path, const std::string& dev_path, const std::string& semantic_ckpt,
                 const std::string& structure_ckpt, const std::string& config_path, const std::string& out,
                 const std::string& epoch_csv) {
  const json cfg_json = load_config(config_path);
  EncoderConfig text_shape;
  GraphEncoderConfig graph_shape;
  const FinetuneConfig cfg = finetune_config(cfg_json, text_shape, graph_shape);
  const auto train = read_instances_jsonl(train_path);
  const auto dev = dev_path.empty() ? std::vector<SupervisedInstance>{} : read_instances_jsonl(dev_path);

  std::optional<TextEncoder> text;
  if (!semantic_ckpt.empty()) {
    text = load_text(semantic_ckpt);
  } else {
    Vocabulary v;
    for (const auto& x : train) {
      for (const auto& t : x.tokens) v.add(t);
      if (x.graph)
        for (const auto& n : x.graph->nodes) v.add(n.concept_label);
    }
    text.emplace(text_shape, v, cfg.seed);
  }
  std::optional<GraphEncoder> graph;
  if (!structure_ckpt.empty()) {
    graph = load_graph(structure_ckpt);
  } else {
    graph_shape.input_dim = text->config().dim;
    graph.emplace(graph_shape, cfg.seed);
  }

  std::ofstream csv;
  if (!epoch_csv.empty()) {
    csv.open(epoch_csv);
    csv << "epoch,train_loss,val_f1\n";
    csv.precision(17);
  }
  FinetuneModel m = finetune(train, dev, *text, *graph, cfg, [&](const EpochRecord& r) {
    if (csv.is_open()) csv << r.epoch << "," << r.train_loss << "," << r.val_f1 << "\n";
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val_f1 " << r.val_f1 << "\n";
  });
  ParameterSet p = m.text.checkpoint_params();
  p.merge(m.graph.params());
  p.merge(m.head.params());
  save(p, out);
  m.text.vocab().save(vocab_path(out));
  write_json(ordered_json(m.labels), out + ".labels.json");
  write_metadata(out, "finetune", cfg_json);
  std::cerr << "best epoch " << m.best_epoch << "\n";
  return 0;
}

int cmd_synth(const std::string& corpus_out, const std::string& gold_out, const std::string& instances_out,
              int sentences, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.sentences = sentences;
  cfg.seed = seed;
  apply_seed_override(cfg.seed);
  const auto c = generate_corpus(cfg);
  write_corpus_jsonl(c.graphs, corpus_out);
  if (!gold_out.empty()) {
    std::ofstream g(gold_out);
    for (const auto& [id, label] : c.trigger_gold) g << ordered_json{{"id", id}, {"type", "trigger"}, {"label", label}}.dump() << "\n";
    for (const auto& [id, label] : c.argument_gold) g << ordered_json{{"id", id}, {"type", "argument"}, {"label", label}}.dump() << "\n";
  }
  if (!instances_out.empty()) {
    std::ofstream i(instances_out);
    write_instances_jsonl(supervised_instances(c), i);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event representation pre-training on AMR graphs, clustering and fine-tuning"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

  std::string in, out, format, config, corpus, semantic, structure, loss_csv, schema, ablate, pred, gold,
      side = "triggers", train, dev, epoch_csv, instances;
  std::string mode;
  bool stats = false;
  int sentences = 300;
  std::uint64_t seed = 7;

  auto* pre = app.add_subcommand("preprocess", "PENMAN or JSONL corpus to merged canonical JSONL");
  pre->add_option("--in", in, "Input file")->required();
  pre->add_option("--out", out, "Output JSONL")->required();
  pre->add_option("--format", format, "penman or jsonl (default: by extension)")->check(CLI::IsMember({"penman", "jsonl"}));
  pre->add_flag("--stats", stats, "Also print merge counts");

  auto* pt = app.add_subcommand("pretrain", "Semantic or structure pre-training");
  pt->add_option("--mode", mode, "semantic or structure")->required()->check(CLI::IsMember({"semantic", "structure"}));
  pt->add_option("--corpus", corpus, "Corpus JSONL")->required();
  pt->add_option("--config", config, "JSON config");
  pt->add_option("--out", out, "Checkpoint path")->required();
  pt->add_option("--semantic", semantic, "Semantic checkpoint (structure mode)");
  pt->add_option("--loss-csv", loss_csv, "Loss trace CSV");

  auto* cl = app.add_subcommand("cluster", "Liberal event extraction by joint clustering");
  cl->add_option("--corpus", corpus, "Corpus JSONL")->required();
  cl->add_option("--semantic", semantic, "Semantic checkpoint")->required();
  cl->add_option("--structure", structure, "Structure checkpoint");
  cl->add_option("--config", config, "JSON config");
  cl->add_option("--out", out, "Clustering JSON")->required();
  cl->add_option("--schema", schema, "Schema summary JSON");
  cl->add_option("--ablate", ablate, "Drop a component (structure)");

  auto* ev = app.add_subcommand("evaluate", "B-Cubed metrics of a clustering against gold labels");
  ev->add_option("--pred", pred, "Clustering JSON")->required();
  ev->add_option("--gold", gold, "Gold JSONL")->required();
  ev->add_option("--side", side, "triggers or arguments");

  auto* ft = app.add_subcommand("finetune", "Supervised fine-tuning");
  ft->add_option("--train", train, "Training instances JSONL")->required();
  ft->add_option("--dev", dev, "Validation instances JSONL");
  ft->add_option("--semantic", semantic, "Semantic checkpoint");
  ft->add_option("--structure", structure, "Structure checkpoint");
  ft->add_option("--config", config, "JSON config");
  ft->add_option("--out", out, "Model checkpoint")->required();
  ft->add_option("--epoch-csv", epoch_csv, "Per-epoch CSV");

  auto* sy = app.add_subcommand("synth", "Generate a synthetic corpus with gold classes");
  sy->add_option("--corpus", corpus, "Corpus JSONL")->required();
  sy->add_option("--gold", gold, "Gold JSONL");
  sy->add_option("--instances", instances, "Supervised instances JSONL");
  sy->add_option("--sentences", sentences, "Sentence count")->check(CLI::PositiveNumber);
  sy->add_option("--seed", seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*pre) return cmd_preprocess(in, out, format, stats);
    if (*pt) return cmd_pretrain(mode, corpus, config, out, semantic, loss_csv);
    if (*cl) return cmd_cluster(corpus, semantic, structure, config, out, schema, ablate);
    if (*ev) return cmd_evaluate(pred, gold, side);
    if (*ft) return cmd_finetune(train, dev, semantic, structure, config, out, epoch_csv);
    if (*sy) return cmd_synth(corpus, gold, instances, sentences, seed);
  } catch (const ParseError& e) {
    std::cerr << "parse error (at " << e.location() << "): " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
