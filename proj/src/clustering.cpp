#include "cleve/clustering.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <unordered_map>

#include "cleve/errors.hpp"

namespace cleve {

ClusterAssignment ClusterAssignment::singletons(std::size_t n) {
  ClusterAssignment c;
  c.k = static_cast<int>(n);
  c.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.labels[i] = static_cast<int>(i);
  return c;
}

double constraint_f(const std::set<ConstraintTuple>& l1, const std::set<ConstraintTuple>& l2) {
  if (l1.empty() && l2.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : l1) inter += l2.count(t);
  const std::size_t uni = l1.size() + l2.size() - inter;
  return std::log1p(static_cast<double>(inter) / static_cast<double>(uni));
}

std::set<ConstraintTuple> context_tuples(const CandidateContext& c, const ClusterAssignment& counterpart_clusters) {
  std::set<ConstraintTuple> out;
  for (const auto& l : c.links) {
    if (l.counterpart < 0 || static_cast<std::size_t>(l.counterpart) >= counterpart_clusters.labels.size())
      throw std::out_of_range("context link to unknown counterpart " + std::to_string(l.counterpart));
    out.emplace(c.owner, l.relation, counterpart_clusters.labels[static_cast<std::size_t>(l.counterpart)]);
  }
  return out;
}

double cosine(const RowVector& a, const RowVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

double shared_relation_term(const CandidateContext& t1, const CandidateContext& t2) {
  double total = 0.0;
  int shared = 0;
  for (const auto& [rel, e1] : t1.relation_structure) {
    auto it = t2.relation_structure.find(rel);
    if (it == t2.relation_structure.end()) continue;
    total += cosine(e1, it->second);
    ++shared;
  }
  return shared == 0 ? 0.0 : total / shared;
}

double trigger_base(const CandidateContext& t1, const CandidateContext& t2, double lambda, bool use_structure) {
  if (!use_structure) return cosine(t1.semantic, t2.semantic);
  return lambda * cosine(t1.semantic, t2.semantic) + (1.0 - lambda) * shared_relation_term(t1, t2);
}

// Jaccard-based constraint over sorted, deduplicated packed tuples.
double packed_f(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return std::log1p(static_cast<double>(inter) / static_cast<double>(uni));
}

Matrix symmetric_matrix(std::size_t n, const std::function<double(std::size_t, std::size_t)>& f, Exec exec) {
  auto rows = map_indexed(
      n,
      [&](std::size_t i) {
        RowVector r(static_cast<Eigen::Index>(n));
        for (std::size_t j = i; j < n; ++j) r(static_cast<Eigen::Index>(j)) = f(i, j);
        return r;
      },
      exec);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      m(a, b) = m(b, a) = rows[i](b);
    }
  return m;
}

}  // namespace

double trigger_similarity(const CandidateContext& t1, const CandidateContext& t2, double lambda,
                          const ClusterAssignment& argument_clusters, bool use_structure) {
  const double f = constraint_f(context_tuples(t1, argument_clusters), context_tuples(t2, argument_clusters));
  if (!use_structure) return cosine(t1.semantic, t2.semantic) + f;
  return lambda * cosine(t1.semantic, t2.semantic) + f + (1.0 - lambda) * shared_relation_term(t1, t2);
}

double argument_similarity(const CandidateContext& a1, const CandidateContext& a2,
                           const ClusterAssignment& trigger_clusters) {
  return cosine(a1.semantic, a2.semantic) +
         constraint_f(context_tuples(a1, trigger_clusters), context_tuples(a2, trigger_clusters));
}

double pair_objective(const Matrix& sim, const ClusterAssignment& c, Exec exec) {
  const std::size_t n = c.labels.size();
  if (static_cast<std::size_t>(sim.rows()) != n || static_cast<std::size_t>(sim.cols()) != n)
    throw std::invalid_argument("pair_objective: matrix and assignment sizes differ");
  auto row_sums = map_indexed(
      n,
      [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
          const double v = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          s += c.labels[i] == c.labels[j] ? 1.0 - v : v;
        }
        return s;
      },
      exec);
  double total = 0.0;
  for (double s : row_sums) total += s;
  return total;
}

double objective_O(const ClusterAssignment& trigger_clusters, const ClusterAssignment& argument_clusters,
                   const std::vector<CandidateContext>& triggers, const std::vector<CandidateContext>& arguments,
                   double lambda, bool use_structure) {
  return JointSimilarity(triggers, arguments, lambda, use_structure).objective(trigger_clusters, argument_clusters);
}

JointSimilarity::JointSimilarity(const std::vector<CandidateContext>& triggers,
                                 const std::vector<CandidateContext>& arguments, double lambda, bool use_structure,
                                 Exec exec)
    : exec_(exec) {
  trigger_base_ = symmetric_matrix(
      triggers.size(), [&](std::size_t i, std::size_t j) { return trigger_base(triggers[i], triggers[j], lambda, use_structure); },
      exec);
  argument_base_ = symmetric_matrix(
      arguments.size(), [&](std::size_t i, std::size_t j) { return cosine(arguments[i].semantic, arguments[j].semantic); },
      exec);
  std::map<std::pair<std::string, std::string>, std::int64_t> ids;
  auto pack = [&](const std::vector<CandidateContext>& side, std::size_t counterparts) {
    Links links(side.size());
    for (std::size_t i = 0; i < side.size(); ++i)
      for (const auto& l : side[i].links) {
        if (l.counterpart < 0 || static_cast<std::size_t>(l.counterpart) >= counterparts)
          throw std::out_of_range("context link to unknown counterpart " + std::to_string(l.counterpart));
        auto [it, _] = ids.emplace(std::make_pair(side[i].owner, l.relation), static_cast<std::int64_t>(ids.size()));
        links[i].emplace_back(it->second, l.counterpart);
      }
    return links;
  };
  trigger_links_ = pack(triggers, arguments.size());
  argument_links_ = pack(arguments, triggers.size());
}

Matrix JointSimilarity::with_constraints(const Matrix& base, const Links& links,
                                         const ClusterAssignment& counterpart) const {
  std::vector<std::vector<std::int64_t>> keys(links.size());
  for (std::size_t i = 0; i < links.size(); ++i) {
    for (const auto& [owner_rel, target] : links[i])
      keys[i].push_back((owner_rel << 32) | counterpart.labels.at(static_cast<std::size_t>(target)));
    std::sort(keys[i].begin(), keys[i].end());
    keys[i].erase(std::unique(keys[i].begin(), keys[i].end()), keys[i].end());
  }
  return symmetric_matrix(
      links.size(),
      [&](std::size_t i, std::size_t j) {
        return base(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + packed_f(keys[i], keys[j]);
      },
      exec_);
}

Matrix JointSimilarity::trigger_matrix(const ClusterAssignment& argument_clusters) const {
  if (argument_clusters.labels.size() != num_arguments()) throw std::invalid_argument("argument assignment size");
  return with_constraints(trigger_base_, trigger_links_, argument_clusters);
}

Matrix JointSimilarity::argument_matrix(const ClusterAssignment& trigger_clusters) const {
  if (trigger_clusters.labels.size() != num_triggers()) throw std::invalid_argument("trigger assignment size");
  return with_constraints(argument_base_, argument_links_, trigger_clusters);
}

double JointSimilarity::objective(const ClusterAssignment& trigger_clusters,
                                  const ClusterAssignment& argument_clusters) const {
  return pair_objective(trigger_matrix(argument_clusters), trigger_clusters, exec_) +
         pair_objective(argument_matrix(trigger_clusters), argument_clusters, exec_);
}

namespace {

std::vector<int> relabel_by_first_appearance(const std::vector<int>& labels) {
  std::unordered_map<int, int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, _] = map.emplace(labels[i], static_cast<int>(map.size()));
    out[i] = it->second;
  }
  return out;
}

struct KMeansResult {
  std::vector<int> labels;
  double wcss = std::numeric_limits<double>::infinity();
};

KMeansResult kmeans(const Matrix& x, int k, int iterations, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Matrix centers(k, x.cols());
  std::vector<Eigen::Index> chosen;
  {
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    chosen.push_back(first(rng));
    centers.row(0) = x.row(chosen[0]);
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) best = std::min(best, (x.row(i) - centers.row(j)).squaredNorm());
        d2[static_cast<std::size_t>(i)] = best;
        total += best;
      }
      Eigen::Index pick = -1;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng), acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          acc += d2[static_cast<std::size_t>(i)];
          if (d2[static_cast<std::size_t>(i)] > 0.0 && acc >= r) {
            pick = i;
            break;
          }
        }
        if (pick < 0)
          for (Eigen::Index i = n - 1; i >= 0 && pick < 0; --i)
            if (d2[static_cast<std::size_t>(i)] > 0.0) pick = i;
      } else {
        // All points coincide with a center: take a not-yet-chosen index.
        std::vector<Eigen::Index> rest;
        for (Eigen::Index i = 0; i < n; ++i)
          if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
        std::uniform_int_distribution<std::size_t> u(0, rest.size() - 1);
        pick = rest[u(rng)];
      }
      chosen.push_back(pick);
      centers.row(c) = x.row(pick);
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
  }
  KMeansResult r{labels, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) r.wcss += (x.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return r;
}

// Moves the farthest point of the largest cluster into each empty cluster.
void repair_empty_clusters(const Matrix& x, int k, std::vector<int>& labels) {
  for (;;) {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    const auto empty = std::find(counts.begin(), counts.end(), 0);
    if (empty == counts.end()) return;
    const int largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    RowVector centroid = RowVector::Zero(x.cols());
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == largest) centroid += x.row(static_cast<Eigen::Index>(i));
    centroid /= counts[static_cast<std::size_t>(largest)];
    std::size_t far = 0;
    double fd = -1.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != largest) continue;
      const double d = (x.row(static_cast<Eigen::Index>(i)) - centroid).squaredNorm();
      if (d > fd) {
        fd = d;
        far = i;
      }
    }
    labels[far] = static_cast<int>(empty - counts.begin());
  }
}

}  // namespace

ClusterAssignment spectral_cluster(const Matrix& similarity, int k, std::uint64_t seed, const SpectralConfig& cfg) {
  const Eigen::Index n = similarity.rows();
  if (similarity.cols() != n) throw std::invalid_argument("spectral_cluster: matrix is not square");
  if (k < 1 || k > n)
    throw ConfigError("spectral_cluster: K=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  if (!similarity.allFinite()) throw NumericError("spectral_cluster: non-finite affinity");
  ClusterAssignment out;
  out.k = k;
  if (k == 1) {
    out.labels.assign(static_cast<std::size_t>(n), 0);
    return out;
  }
  Matrix a = (0.5 * (similarity + similarity.transpose())).cwiseMax(0.0);
  a.diagonal().setZero();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a.row(i).sum();
    inv_sqrt(i) = 1.0 / std::sqrt(d > 0.0 ? d : 1.0);
  }
  Matrix lap = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(lap);
  if (es.info() != Eigen::Success) throw NumericError("spectral_cluster: eigensolver failed");
  Matrix u = es.eigenvectors().leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  KMeansResult best;
  for (int r = 0; r < std::max(1, cfg.kmeans_restarts); ++r) {
    auto rng = derive_rng(seed, {41, static_cast<std::uint64_t>(r)});
    KMeansResult cand = kmeans(u, k, cfg.kmeans_iterations, rng);
    if (cand.wcss < best.wcss) best = std::move(cand);
  }
  repair_empty_clusters(u, k, best.labels);
  out.labels = relabel_by_first_appearance(best.labels);
  return out;
}

JointResult joint_cluster(const std::vector<CandidateContext>& triggers,
                          const std::vector<CandidateContext>& arguments, const ClusteringConfig& cfg) {
  if (triggers.empty() || arguments.empty())
    throw DataError("joint_cluster: need at least one trigger and one argument candidate");
  const int nt = static_cast<int>(triggers.size()), na = static_cast<int>(arguments.size());
  if (cfg.kt_min < 1 || cfg.kt_min > cfg.kt_max || cfg.kt_max > nt)
    throw ConfigError("K_T range [" + std::to_string(cfg.kt_min) + ", " + std::to_string(cfg.kt_max) +
                      "] invalid for " + std::to_string(nt) + " triggers");
  if (cfg.ka_min < 1 || cfg.ka_min > cfg.ka_max || cfg.ka_max > na)
    throw ConfigError("K_A range [" + std::to_string(cfg.ka_min) + ", " + std::to_string(cfg.ka_max) +
                      "] invalid for " + std::to_string(na) + " arguments");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ConfigError("lambda must lie in [0, 1]");

  std::vector<std::pair<int, int>> grid;
  for (int kt = cfg.kt_min; kt <= cfg.kt_max; ++kt)
    for (int ka = cfg.ka_min; ka <= cfg.ka_max; ++ka) grid.emplace_back(kt, ka);
  // Parallelism goes to the grid when there is one, else to the matrices.
  const Exec grid_exec = grid.size() > 1 ? cfg.exec : Exec::kSerial;
  const JointSimilarity inner(triggers, arguments, cfg.lambda, cfg.use_structure,
                              grid.size() > 1 ? Exec::kSerial : cfg.exec);

  auto run = [&](std::size_t g) {
    const auto [kt, ka] = grid[g];
    const std::uint64_t tseed = derive_rng(cfg.seed, {51, static_cast<std::uint64_t>(kt)})();
    const std::uint64_t aseed = derive_rng(cfg.seed, {52, static_cast<std::uint64_t>(ka)})();
    JointResult r;
    r.kt = kt;
    r.ka = ka;
    ClusterAssignment ca = spectral_cluster(inner.argument_matrix(ClusterAssignment::singletons(triggers.size())), ka,
                                            aseed, cfg.spectral);
    ClusterAssignment ct = spectral_cluster(inner.trigger_matrix(ca), kt, tseed, cfg.spectral);
    r.triggers = ct;
    r.arguments = ca;
    r.objective = inner.objective(ct, ca);
    r.evaluated.push_back(r.objective);
    for (int it = 0; it < cfg.max_iterations; ++it) {
      ClusterAssignment ct_next = spectral_cluster(inner.trigger_matrix(ca), kt, tseed, cfg.spectral);
      ClusterAssignment ca_next = spectral_cluster(inner.argument_matrix(ct_next), ka, aseed, cfg.spectral);
      if (ct_next == ct && ca_next == ca) break;  // fixed point: later iterations repeat it
      ct = std::move(ct_next);
      ca = std::move(ca_next);
      const double o = inner.objective(ct, ca);
      r.evaluated.push_back(o);
      if (o < r.objective) {
        r.objective = o;
        r.triggers = ct;
        r.arguments = ca;
      }
    }
    return r;
  };
  auto results = map_indexed(grid.size(), run, grid_exec);

  JointResult best = results.front();
  best.evaluated.clear();
  for (const auto& r : results) {
    best.evaluated.insert(best.evaluated.end(), r.evaluated.begin(), r.evaluated.end());
    if (r.objective < best.objective) {
      best.triggers = r.triggers;
      best.arguments = r.arguments;
      best.objective = r.objective;
      best.kt = r.kt;
      best.ka = r.ka;
    }
  }
  return best;
}

}  // namespace cleve
