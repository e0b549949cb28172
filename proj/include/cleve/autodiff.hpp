#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// Every value is an Eigen matrix; row vectors are 1 x d, scalars 1 x 1.
// Values are computed eagerly when an op is recorded. A tape built with
// record=false skips the backward closures and serves as a plain forward
// evaluator. A tape is single-threaded; concurrent work uses one tape per
// thread.

namespace cleve::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  /// Gradient of the last backward() root with respect to `v`; an all-zero
  /// matrix of the right shape if `v` did not influence the root.
  Matrix grad(Var v) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }

  /// Seeds d(root) = seed (ones for a scalar root) and propagates.
  void backward(Var root);
  void backward(Var root, const Matrix& seed);

  /// Records a derived node. `backward` is dropped when not recording or
  /// when no parent requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);

  const Matrix& upstream(int id) const { return nodes_[id].grad; }
  /// Adds `delta` into the gradient of node `id` if it requires one.
  void accumulate(int id, const Matrix& delta);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// Element-wise and linear algebra.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // element-wise
Var scale(Var a, double s);
Var scale_by(Var s, Var a);            // s is 1x1
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_row(Var a, Var row);           // broadcast 1 x d over the rows of a
Var mul_const(Var a, const Matrix& m); // element-wise by a constant mask

// Non-linearities.
Var relu(Var a);
Var tanh(Var a);
Var gelu(Var a);

// Shape manipulation.
Var gather_rows(Var table, std::span<const int> ids);
Var row(Var a, Eigen::Index i);
Var rows(Var a, std::span<const int> ids);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var element(Var a, Eigen::Index i, Eigen::Index j);
/// Entries (row, col) of `a` as a 1 x k row; repeated indices accumulate.
Var gather_elements(Var a, std::span<const std::pair<int, int>> idx);
/// n x n matrix with entry (i, j) = table(r, clamp(j - i, -w, w) + w), where
/// table has 2w + 1 columns: a relative-position bias read from row r.
Var relative_bias(Var table, Eigen::Index r, Eigen::Index n);

// Reductions.
Var sum(Var a);
Var mean_rows(Var a);                  // n x d -> 1 x d
Var max_rows(Var a, Eigen::Index begin, Eigen::Index end);  // 1 x d; rows [begin, end)
Var log_sum_exp(Var a);                // all entries -> 1x1, max-shifted
Var l2_normalize(Var a);               // whole-matrix norm; zero maps to zero

// Row-wise softmax; entries where `keep` is false get probability zero.
// `keep` is rows x cols, or empty for no mask.
Var softmax_rows(Var a, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& keep = {});
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// -log softmax(logits)[target] for a 1 x C row.
Var cross_entropy(Var logits, int target);

}  // namespace cleve::ad
