#include "cleve/evaluation.hpp"

#include "json.hpp"

#include "cleve/errors.hpp"

namespace cleve {

BCubedExact b_cubed_exact(const std::vector<int>& pred, const std::vector<std::string>& gold) {
  if (pred.size() != gold.size()) throw DataError("b_cubed: prediction and gold cover different items");
  if (pred.empty()) throw DataError("b_cubed: no items");
  // Contingency counts: item i contributes n_cg / |C| to precision, and the
  // n_cg items of cell (c, g) contribute n_cg^2 / |C| together.
  std::map<std::pair<int, std::string>, long> cell;
  std::map<int, long> cluster_size;
  std::map<std::string, long> class_size;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++cell[{pred[i], gold[i]}];
    ++cluster_size[pred[i]];
    ++class_size[gold[i]];
  }
  Rational p = 0, r = 0;
  for (const auto& [key, n] : cell) {
    p += Rational(n * n, cluster_size[key.first]);
    r += Rational(n * n, class_size[key.second]);
  }
  const Rational n_items = static_cast<long>(pred.size());
  BCubedExact out{p / n_items, r / n_items, 0};
  if (out.precision + out.recall > 0) out.f1 = 2 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

BCubed b_cubed(const std::vector<int>& pred, const std::vector<std::string>& gold) {
  const BCubedExact e = b_cubed_exact(pred, gold);
  return {static_cast<double>(e.precision), static_cast<double>(e.recall), static_cast<double>(e.f1), pred.size()};
}

BCubed b_cubed(const std::map<std::string, int>& pred, const std::map<std::string, std::string>& gold) {
  std::vector<int> p;
  std::vector<std::string> g;
  for (const auto& [id, c] : pred) {
    auto it = gold.find(id);
    if (it == gold.end()) throw DataError("b_cubed: item " + id + " has no gold label");
    p.push_back(c);
    g.push_back(it->second);
  }
  if (gold.size() != pred.size()) {
    for (const auto& [id, _] : gold)
      if (!pred.count(id)) throw DataError("b_cubed: gold item " + id + " missing from the prediction");
  }
  return b_cubed(p, g);
}

std::string metrics_json(const BCubed& m) {
  nlohmann::ordered_json j;
  j["b3_precision"] = m.precision;
  j["b3_recall"] = m.recall;
  j["b3_f1"] = m.f1;
  j["n_items"] = m.n_items;
  return j.dump();
}

}  // namespace cleve
