#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "cleve/autodiff.hpp"

namespace cleve {

using ad::Matrix;
using ad::RowVector;

/// Ordered collection of named parameter matrices. Values are held in double
/// precision but kept f32-representable (see round_to_f32) so checkpoints
/// reproduce them exactly.
class ParameterSet {
 public:
  Matrix& add(const std::string& name, Matrix value);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index(name) >= 0; }
  int index(const std::string& name) const;

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }

  /// Appends every entry of `other` (names must not collide).
  void merge(const ParameterSet& other);
  /// Entries whose name starts with `prefix`.
  ParameterSet with_prefix(const std::string& prefix) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

using Gradients = std::vector<Matrix>;

Gradients zero_gradients(const ParameterSet& p);
void accumulate(Gradients& into, const Gradients& from);

/// Leaves on `tape` for every parameter, in ParameterSet order.
std::vector<ad::Var> bind(ad::Tape& tape, const ParameterSet& p, bool trainable = true);
Gradients collect(const ad::Tape& tape, const std::vector<ad::Var>& vars);

void round_to_f32(Matrix& m);
void round_to_f32(ParameterSet& p);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and decoupled weight decay.
class Adam {
 public:
  Adam(const ParameterSet& p, AdamConfig cfg);
  void step(ParameterSet& p, const Gradients& g, double lr, double weight_decay = 0.0);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  Gradients m_, v_;
  long t_ = 0;
};

/// Independent generator for a (seed, stream...) tuple.
std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

/// Matrix with i.i.d. N(0, stddev^2) entries, rounded to f32.
Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

}  // namespace cleve
