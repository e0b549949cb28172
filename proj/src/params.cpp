#include "cleve/params.hpp"

#include <cmath>
#include <stdexcept>

namespace cleve {

Matrix& ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  names_.push_back(name);
  values_.push_back(std::move(value));
  return values_.back();
}

int ParameterSet::index(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

Matrix& ParameterSet::at(const std::string& name) {
  int i = index(name);
  if (i < 0) throw std::out_of_range("missing parameter " + name);
  return values_[i];
}

const Matrix& ParameterSet::at(const std::string& name) const {
  int i = index(name);
  if (i < 0) throw std::out_of_range("missing parameter " + name);
  return values_[i];
}

void ParameterSet::merge(const ParameterSet& other) {
  for (std::size_t i = 0; i < other.size(); ++i) add(other.name(i), other.value(i));
}

ParameterSet ParameterSet::with_prefix(const std::string& prefix) const {
  ParameterSet out;
  for (std::size_t i = 0; i < size(); ++i)
    if (names_[i].rfind(prefix, 0) == 0) out.add(names_[i], values_[i]);
  return out;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values_[i].rows() != b.values_[i].rows() || a.values_[i].cols() != b.values_[i].cols()) return false;
    if (a.values_[i] != b.values_[i]) return false;
  }
  return true;
}

Gradients zero_gradients(const ParameterSet& p) {
  Gradients g;
  g.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g.push_back(Matrix::Zero(p.value(i).rows(), p.value(i).cols()));
  return g;
}

void accumulate(Gradients& into, const Gradients& from) {
  if (into.size() != from.size()) throw std::invalid_argument("gradient set size mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

std::vector<ad::Var> bind(ad::Tape& tape, const ParameterSet& p, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    vars.push_back(trainable ? tape.variable(p.value(i)) : tape.constant(p.value(i)));
  return vars;
}

Gradients collect(const ad::Tape& tape, const std::vector<ad::Var>& vars) {
  Gradients g;
  g.reserve(vars.size());
  for (const auto& v : vars) g.push_back(tape.grad(v));
  return g;
}

void round_to_f32(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

void round_to_f32(ParameterSet& p) {
  for (std::size_t i = 0; i < p.size(); ++i) round_to_f32(p.value(i));
}

Adam::Adam(const ParameterSet& p, AdamConfig cfg) : cfg_(cfg), m_(zero_gradients(p)), v_(zero_gradients(p)) {}

void Adam::step(ParameterSet& p, const Gradients& g, double lr, double weight_decay) {
  if (g.size() != p.size()) throw std::invalid_argument("Adam: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i].cwiseAbs2();
    if (lr == 0.0) continue;
    Matrix& w = p.value(i);
    if (weight_decay != 0.0) w -= lr * weight_decay * w;
    w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    round_to_f32(w);
  }
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  auto push64 = [&](std::uint64_t x) {
    words.push_back(static_cast<std::uint32_t>(x));
    words.push_back(static_cast<std::uint32_t>(x >> 32));
  };
  push64(seed);
  for (auto s : stream) push64(s);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  round_to_f32(m);
  return m;
}

}  // namespace cleve
