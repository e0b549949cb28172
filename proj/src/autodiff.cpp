#include "cleve/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cleve::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  bool rg = false;
  for (const Var& p : parents) {
    assert(p.tape() == this);
    rg = rg || nodes_[p.id()].requires_grad;
  }
  if (!record_ || !rg) backward = nullptr;
  nodes_.push_back(Node{std::move(value), {}, rg, std::move(backward)});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

void Tape::accumulate(int id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = delta;
  else
    n.grad += delta;
}

void Tape::backward(Var root) {
  backward(root, Matrix::Ones(root.rows(), root.cols()));
}

void Tape::backward(Var root, const Matrix& seed) {
  if (!record_) throw std::logic_error("backward() on a non-recording tape");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (seed.rows() != root.rows() || seed.cols() != root.cols())
    throw std::invalid_argument("backward seed shape mismatch");
  nodes_[root.id()].grad = seed;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  Tape& t = *a.tape();
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id(), t.upstream(self));
    t.accumulate(b.id(), t.upstream(self));
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tape& t = *a.tape();
  return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id(), t.upstream(self));
    t.accumulate(b.id(), -t.upstream(self));
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tape& t = *a.tape();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(a.id(), g.cwiseProduct(t.value(b)));
    t.accumulate(b.id(), g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, {a}, [a, s](Tape& t, int self) { t.accumulate(a.id(), t.upstream(self) * s); });
}

Var scale_by(Var s, Var a) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: factor must be 1x1");
  Tape& t = *a.tape();
  return t.push(a.value() * s.scalar(), {s, a}, [s, a](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(s.id(), Matrix::Constant(1, 1, g.cwiseProduct(t.value(a)).sum()));
    t.accumulate(a.id(), g * t.value(s)(0, 0));
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape();
  return t.push(a.value().array() + c, {a}, [a](Tape& t, int self) { t.accumulate(a.id(), t.upstream(self)); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape();
  return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * t.value(b).transpose());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), t.value(a).transpose() * g);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.push(a.value().transpose(), {a},
                [a](Tape& t, int self) { t.accumulate(a.id(), t.upstream(self).transpose()); });
}

Var add_row(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Tape& t = *a.tape();
  Matrix v = a.value().rowwise() + r.value().row(0);
  return t.push(std::move(v), {a, r}, [a, r](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(a.id(), g);
    t.accumulate(r.id(), g.colwise().sum());
  });
}

Var mul_const(Var a, const Matrix& m) {
  check_same_shape(a.value(), m, "mul_const");
  Tape& t = *a.tape();
  return t.push(a.value().cwiseProduct(m), {a},
                [a, m](Tape& t, int self) { t.accumulate(a.id(), t.upstream(self).cwiseProduct(m)); });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  return t.push(a.value().cwiseMax(0.0), {a}, [a](Tape& t, int self) {
    Matrix mask = (t.value(a).array() > 0.0).cast<double>();
    t.accumulate(a.id(), t.upstream(self).cwiseProduct(mask));
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value().array().tanh();
  return t.push(y, {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate(a.id(), t.upstream(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var gelu(Var a) {
  Tape& t = *a.tape();
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Matrix y = a.value().unaryExpr([inv_sqrt2](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return t.push(std::move(y), {a}, [a, inv_sqrt2](Tape& t, int self) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = t.value(a).unaryExpr([&](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    t.accumulate(a.id(), t.upstream(self).cwiseProduct(d));
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix v(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= tv.rows()) throw std::out_of_range("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(k)) = tv.row(ids[k]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  Tape& t = *table.tape();
  return t.push(std::move(v), {table}, [table, idx](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    Matrix d = Matrix::Zero(t.value(table).rows(), t.value(table).cols());
    for (std::size_t k = 0; k < idx.size(); ++k) d.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
    t.accumulate(table.id(), d);
  });
}

Var row(Var a, Eigen::Index i) {
  int id = static_cast<int>(i);
  return rows(a, std::span<const int>(&id, 1));
}

Var rows(Var a, std::span<const int> ids) { return gather_rows(a, ids); }

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: range");
  Tape& t = *a.tape();
  Matrix v = a.value().middleCols(start, count);
  return t.push(std::move(v), {a}, [a, start, count](Tape& t, int self) {
    Matrix d = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    d.middleCols(start, count) = t.upstream(self);
    t.accumulate(a.id(), d);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Eigen::Index r = parts[0].rows(), c = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    c += p.cols();
  }
  Matrix v(r, c);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  Tape& t = *parts[0].tape();
  return t.push(std::move(v), parts, [ps](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    Eigen::Index off = 0;
    for (const Var& p : ps) {
      const Eigen::Index c = t.value(p).cols();
      if (t.requires_grad(p.id())) t.accumulate(p.id(), g.middleCols(off, c));
      off += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Eigen::Index c = parts[0].cols(), r = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    r += p.rows();
  }
  Matrix v(r, c);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  Tape& t = *parts[0].tape();
  return t.push(std::move(v), parts, [ps](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    Eigen::Index off = 0;
    for (const Var& p : ps) {
      const Eigen::Index r = t.value(p).rows();
      if (t.requires_grad(p.id())) t.accumulate(p.id(), g.middleRows(off, r));
      off += r;
    }
  });
}

Var element(Var a, Eigen::Index i, Eigen::Index j) {
  Tape& t = *a.tape();
  return t.push(Matrix::Constant(1, 1, a.value()(i, j)), {a}, [a, i, j](Tape& t, int self) {
    Matrix d = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    d(i, j) = t.upstream(self)(0, 0);
    t.accumulate(a.id(), d);
  });
}

Var gather_elements(Var a, std::span<const std::pair<int, int>> idx) {
  const Matrix& av = a.value();
  Matrix out(1, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(0, static_cast<Eigen::Index>(k)) = av(idx[k].first, idx[k].second);
  std::vector<std::pair<int, int>> keep(idx.begin(), idx.end());
  Tape& t = *a.tape();
  return t.push(std::move(out), {a}, [a, keep = std::move(keep)](Tape& t, int self) {
    Matrix d = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    const Matrix& up = t.upstream(self);
    for (std::size_t k = 0; k < keep.size(); ++k) d(keep[k].first, keep[k].second) += up(0, static_cast<Eigen::Index>(k));
    t.accumulate(a.id(), d);
  });
}

Var relative_bias(Var table, Eigen::Index r, Eigen::Index n) {
  const Matrix& tv = table.value();
  if (tv.cols() % 2 == 0) throw std::invalid_argument("relative_bias: table needs an odd column count");
  if (r < 0 || r >= tv.rows()) throw std::invalid_argument("relative_bias: row out of range");
  const Eigen::Index w = (tv.cols() - 1) / 2;
  auto col = [w](Eigen::Index i, Eigen::Index j) { return std::clamp<Eigen::Index>(j - i, -w, w) + w; };
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = tv(r, col(i, j));
  Tape& t = *table.tape();
  return t.push(std::move(out), {table}, [table, r, n, col](Tape& t, int self) {
    Matrix d = Matrix::Zero(t.value(table).rows(), t.value(table).cols());
    const Matrix& up = t.upstream(self);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(r, col(i, j)) += up(i, j);
    t.accumulate(table.id(), d);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  return t.push(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id(), Matrix::Constant(t.value(a).rows(), t.value(a).cols(), t.upstream(self)(0, 0)));
  });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  Tape& t = *a.tape();
  Matrix v = a.value().colwise().mean();
  return t.push(std::move(v), {a}, [a](Tape& t, int self) {
    const Eigen::Index n = t.value(a).rows();
    Matrix d = t.upstream(self).replicate(n, 1) / static_cast<double>(n);
    t.accumulate(a.id(), d);
  });
}

Var max_rows(Var a, Eigen::Index begin, Eigen::Index end) {
  if (begin < 0 || end > a.rows() || begin >= end) throw std::out_of_range("max_rows: empty or bad range");
  const Matrix& av = a.value();
  Matrix v(1, av.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(av.cols()));
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    Eigen::Index best = begin;
    for (Eigen::Index r = begin + 1; r < end; ++r)
      if (av(r, c) > av(best, c)) best = r;
    arg[static_cast<std::size_t>(c)] = best;
    v(0, c) = av(best, c);
  }
  Tape& t = *a.tape();
  return t.push(std::move(v), {a}, [a, arg](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    Matrix d = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    for (std::size_t c = 0; c < arg.size(); ++c) d(arg[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
    t.accumulate(a.id(), d);
  });
}

Var log_sum_exp(Var a) {
  const Matrix& av = a.value();
  if (av.size() == 0) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = av.maxCoeff();
  const double lse = m + std::log((av.array() - m).exp().sum());
  Tape& t = *a.tape();
  return t.push(Matrix::Constant(1, 1, lse), {a}, [a](Tape& t, int self) {
    const double g = t.upstream(self)(0, 0);
    const double lse = t.value(self)(0, 0);
    t.accumulate(a.id(), ((t.value(a).array() - lse).exp() * g).matrix());
  });
}

Var l2_normalize(Var a) {
  const double n = a.value().norm();
  Tape& t = *a.tape();
  if (n == 0.0) {
    return t.push(Matrix::Zero(a.rows(), a.cols()), {a}, [](Tape&, int) {});
  }
  return t.push(a.value() / n, {a}, [a, n](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.upstream(self);
    const double yg = y.cwiseProduct(g).sum();
    t.accumulate(a.id(), (g - y * yg) / n);
  });
}

Var softmax_rows(Var a, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& keep) {
  const Matrix& av = a.value();
  const bool masked = keep.size() != 0;
  if (masked && (keep.rows() != av.rows() || keep.cols() != av.cols()))
    throw std::invalid_argument("softmax_rows: mask shape mismatch");
  Matrix p = Matrix::Zero(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < av.cols(); ++c)
      if (!masked || keep(r, c)) m = std::max(m, av(r, c));
    if (!std::isfinite(m)) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < av.cols(); ++c)
      if (!masked || keep(r, c)) z += (p(r, c) = std::exp(av(r, c) - m));
    p.row(r) /= z;
  }
  Tape& t = *a.tape();
  return t.push(std::move(p), {a}, [a](Tape& t, int self) {
    const Matrix& p = t.value(self);
    const Matrix& g = t.upstream(self);
    Eigen::VectorXd dots = g.cwiseProduct(p).rowwise().sum();
    Matrix d = p.cwiseProduct(g - dots.replicate(1, g.cols()));
    t.accumulate(a.id(), d);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw std::invalid_argument("layer_norm: gain/bias shape");
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  Tape& t = *x.tape();
  return t.push(std::move(y), {x, gain, bias}, [x, gain, bias, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(gain.id(), g.cwiseProduct(xhat).colwise().sum());
    t.accumulate(bias.id(), g.colwise().sum());
    if (!t.requires_grad(x.id())) return;
    Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
    const double dd = static_cast<double>(dxhat.cols());
    Matrix dx(dxhat.rows(), dxhat.cols());
    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
      const double m1 = dxhat.row(r).sum() / dd;
      const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).sum() / dd;
      dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
    }
    t.accumulate(x.id(), dx);
  });
}

Var cross_entropy(Var logits, int target) {
  if (logits.rows() != 1 || target < 0 || target >= logits.cols())
    throw std::invalid_argument("cross_entropy: bad logits or target");
  return sub(log_sum_exp(logits), element(logits, 0, target));
}

}  // namespace cleve::ad
