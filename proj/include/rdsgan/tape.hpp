#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records the ops of one forward evaluation; Var is a cheap handle to
// a node on it. Vectors are stored as n-by-1 matrices, scalars as 1-by-1,
// everything row-major. backward() replays the recorded ops in exact reverse
// execution order and accumulates gradients additively, so a value consumed
// twice receives both contributions. Nodes reachable only from constants are
// skipped during the backward sweep.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rdsgan/errors.hpp"
#include "rdsgan/rng.hpp"

namespace rdsgan {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr; }
  const Matrix<Scalar>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
};

template <typename Scalar>
inline std::string shape_of(const Matrix<Scalar>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  // Called with (tape, d(loss)/d(out), out value).
  using Backprop = std::function<void(Tape&, const Mat&, const Mat&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat v) { return push(std::move(v), false, nullptr); }
  Var<Scalar> variable(Mat v) { return push(std::move(v), true, nullptr); }

  Var<Scalar> scalar_constant(Scalar s) {
    Mat m(1, 1);
    m(0, 0) = s;
    return constant(std::move(m));
  }

  Var<Scalar> push(Mat v, bool needs_grad, Backprop bp) {
    nodes_.push_back(Node{std::move(v), Mat(), needs_grad, std::move(bp)});
    return Var<Scalar>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Mat& value(std::int32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::int32_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward() target w.r.t. this node. Zero matrix for
  // variables the loss does not reach.
  const Mat& grad(Var<Scalar> v) const { return nodes_[v.id].grad; }

  template <class Derived>
  void accumulate(std::int32_t id, const Eigen::MatrixBase<Derived>& g) {
    if (nodes_[id].needs_grad) nodes_[id].grad += g;
  }

  // Direct gradient access for scatter-style updates; nullptr when the node
  // is outside the gradient set.
  Mat* grad_if_needed(std::int32_t id) {
    return nodes_[id].needs_grad ? &nodes_[id].grad : nullptr;
  }

  void backward(Var<Scalar> loss) {
    if (loss.tape != this) throw ShapeError("backward: loss lives on a different tape");
    if (nodes_[loss.id].value.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_of(nodes_[loss.id].value));
    }
    for (auto& n : nodes_) {
      if (n.needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
    if (!nodes_[loss.id].needs_grad) return;  // loss independent of every variable
    nodes_[loss.id].grad(0, 0) = Scalar(1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.backprop) n.backprop(*this, n.grad, n.value);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <typename S>
inline Tape<S>& same_tape(Var<S> a, Var<S> b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ShapeError("op inputs must live on the same tape");
  }
  return *a.tape;
}

template <typename S>
inline void require_same_shape(const char* op, Var<S> a, Var<S> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                     shape_of(b.value()));
  }
}

template <typename S>
inline void require_vector(const char* op, Var<S> v) {
  if (v.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected a column vector, got " + shape_of(v.value()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape("add", a, b);
  Matrix<S> out = a.value() + b.value();
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  auto aid = a.id, bid = b.id;
  return t.push(std::move(out), ng,
                [aid, bid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(aid, g);
                  T.accumulate(bid, g);
                });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Matrix<S> out = a.value() - b.value();
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  auto aid = a.id, bid = b.id;
  return t.push(std::move(out), ng,
                [aid, bid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(aid, g);
                  T.accumulate(bid, -g);
                });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  Matrix<S> out = c * a.value();
  auto aid = a.id;
  return t.push(std::move(out), t.needs_grad(aid),
                [aid, c](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(aid, c * g);
                });
}

template <typename S>
Var<S> neg(Var<S> a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> cwise_mul(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape("cwise_mul", a, b);
  Matrix<S> out = a.value().cwiseProduct(b.value());
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  auto aid = a.id, bid = b.id;
  return t.push(std::move(out), ng,
                [aid, bid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  if (T.needs_grad(aid)) T.accumulate(aid, g.cwiseProduct(T.value(bid)));
                  if (T.needs_grad(bid)) T.accumulate(bid, g.cwiseProduct(T.value(aid)));
                });
}

template <typename S>
Var<S> cwise_div(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape("cwise_div", a, b);
  Matrix<S> out = a.value().cwiseQuotient(b.value());
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  auto aid = a.id, bid = b.id;
  return t.push(std::move(out), ng,
                [aid, bid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>& y) {
                  const Matrix<S>& bv = T.value(bid);
                  if (T.needs_grad(aid)) T.accumulate(aid, g.cwiseQuotient(bv));
                  if (T.needs_grad(bid))
                    T.accumulate(bid, (-g.array() * y.array() / bv.array()).matrix());
                });
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_of(a.value()) + " * " +
                     shape_of(b.value()));
  }
  Matrix<S> out = a.value() * b.value();
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  auto aid = a.id, bid = b.id;
  return t.push(std::move(out), ng,
                [aid, bid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  if (T.needs_grad(aid)) T.accumulate(aid, g * T.value(bid).transpose());
                  if (T.needs_grad(bid)) T.accumulate(bid, T.value(aid).transpose() * g);
                });
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Tape<S>& t = *a.tape;
  Matrix<S> out = a.value().transpose();
  auto aid = a.id;
  return t.push(std::move(out), t.needs_grad(aid),
                [aid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(aid, g.transpose());
                });
}

// result[i] = sum_j W[i][j] x[j] + b[i]
template <typename S>
Var<S> affine(Var<S> x, Var<S> w, Var<S> b) {
  detail::require_vector("affine", x);
  detail::require_vector("affine", b);
  if (w.cols() != x.rows() || w.rows() != b.rows()) {
    throw ShapeError("affine: W is " + shape_of(w.value()) + ", x is " + shape_of(x.value()) +
                     ", b is " + shape_of(b.value()));
  }
  return add(matmul(w, x), b);
}

// out(i, j) = m(i, j) + rowvec(j); rowvec given as a column vector.
template <typename S>
Var<S> add_rowvec(Var<S> m, Var<S> rowvec) {
  Tape<S>& t = detail::same_tape(m, rowvec);
  detail::require_vector("add_rowvec", rowvec);
  if (rowvec.rows() != m.cols()) {
    throw ShapeError("add_rowvec: " + shape_of(m.value()) + " + row of length " +
                     std::to_string(rowvec.rows()));
  }
  Matrix<S> out = m.value().rowwise() + rowvec.value().transpose().row(0);
  bool ng = t.needs_grad(m.id) || t.needs_grad(rowvec.id);
  auto mid = m.id, rid = rowvec.id;
  return t.push(std::move(out), ng,
                [mid, rid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(mid, g);
                  if (T.needs_grad(rid)) T.accumulate(rid, g.colwise().sum().transpose());
                });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
Var<S> tanh(Var<S> a) {
  Tape<S>& t = *a.tape;
  Matrix<S> out = a.value().array().tanh().matrix();
  auto aid = a.id;
  return t.push(std::move(out), t.needs_grad(aid),
                [aid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>& y) {
                  T.accumulate(aid, (g.array() * (S(1) - y.array().square())).matrix());
                });
}

// Logistic sigmoid, clamped into [1e-7, 1 - 1e-7] so that log(D) and
// log(1 - D) stay finite downstream.
template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  const S lo = S(1e-7), hi = S(1) - S(1e-7);
  Matrix<S> out = (S(1) / (S(1) + (-a.value().array()).exp()))
                      .cwiseMax(lo)
                      .cwiseMin(hi)
                      .matrix();
  auto aid = a.id;
  return t.push(std::move(out), t.needs_grad(aid),
                [aid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>& y) {
                  T.accumulate(aid, (g.array() * y.array() * (S(1) - y.array())).matrix());
                });
}

enum class Activation { Tanh, Sigmoid };

template <typename S>
Var<S> activation(Var<S> a, Activation kind) {
  return kind == Activation::Tanh ? tanh(a) : sigmoid(a);
}

template <typename S>
Var<S> log(Var<S> a) {
  Tape<S>& t = *a.tape;
  if ((a.value().array() <= S(0)).any()) {
    throw NumericError("log: non-positive input");
  }
  Matrix<S> out = a.value().array().log().matrix();
  auto aid = a.id;
  return t.push(std::move(out), t.needs_grad(aid),
                [aid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(aid, (g.array() / T.value(aid).array()).matrix());
                });
}

template <typename S>
Var<S> exp(Var<S> a) {
  Tape<S>& t = *a.tape;
  Matrix<S> out = a.value().array().exp().matrix();
  auto aid = a.id;
  return t.push(std::move(out), t.needs_grad(aid),
                [aid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>& y) {
                  T.accumulate(aid, (g.array() * y.array()).matrix());
                });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  auto aid = a.id;
  const Index r = a.rows(), c = a.cols();
  return t.push(std::move(out), t.needs_grad(aid),
                [aid, r, c](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(aid, Matrix<S>::Constant(r, c, g(0, 0)));
                });
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty input");
  return scale(sum_all(a), S(1) / S(a.size()));
}

// Softmax of a column vector, computed with max subtraction. Preserves the
// argmax under any constant shift of the inputs.
template <typename S>
Var<S> softmax(Var<S> v) {
  Tape<S>& t = *v.tape;
  detail::require_vector("softmax", v);
  if (v.rows() < 1) throw ShapeError("softmax: empty vector");
  const auto& x = v.value();
  S m = x.maxCoeff();
  Matrix<S> out = (x.array() - m).exp().matrix();
  out /= out.sum();
  auto vid = v.id;
  return t.push(std::move(out), t.needs_grad(vid),
                [vid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>& y) {
                  S dotted = (y.array() * g.array()).sum();
                  T.accumulate(vid, (y.array() * (g.array() - dotted)).matrix());
                });
}

template <typename S>
Var<S> logsumexp(Var<S> v) {
  Tape<S>& t = *v.tape;
  detail::require_vector("logsumexp", v);
  if (v.rows() < 1) throw ShapeError("logsumexp: empty vector");
  const auto& x = v.value();
  S m = x.maxCoeff();
  S s = (x.array() - m).exp().sum();
  Matrix<S> out(1, 1);
  out(0, 0) = m + std::log(s);
  auto vid = v.id;
  return t.push(std::move(out), t.needs_grad(vid),
                [vid](Tape<S>& T, const Matrix<S>& g, const Matrix<S>& y) {
                  const auto& xv = T.value(vid);
                  T.accumulate(vid, ((xv.array() - y(0, 0)).exp() * g(0, 0)).matrix());
                });
}

// ---------------------------------------------------------------------------
// Indexing, gathering, concatenation
// ---------------------------------------------------------------------------

template <typename S>
Var<S> pick(Var<S> v, Index i) {
  Tape<S>& t = *v.tape;
  detail::require_vector("pick", v);
  if (i < 0 || i >= v.rows()) {
    throw ShapeError("pick: index " + std::to_string(i) + " out of range for " +
                     shape_of(v.value()));
  }
  Matrix<S> out(1, 1);
  out(0, 0) = v.value()(i, 0);
  auto vid = v.id;
  return t.push(std::move(out), t.needs_grad(vid),
                [vid, i](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  if (auto* gm = T.grad_if_needed(vid)) (*gm)(i, 0) += g(0, 0);
                });
}

template <typename S>
Var<S> gather_elems(Var<S> v, std::vector<Index> idx) {
  Tape<S>& t = *v.tape;
  detail::require_vector("gather_elems", v);
  Matrix<S> out(static_cast<Index>(idx.size()), 1);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= v.rows()) {
      throw ShapeError("gather_elems: index " + std::to_string(idx[j]) + " out of range for " +
                       shape_of(v.value()));
    }
    out(static_cast<Index>(j), 0) = v.value()(idx[j], 0);
  }
  auto vid = v.id;
  return t.push(std::move(out), t.needs_grad(vid),
                [vid, idx = std::move(idx)](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  if (auto* gm = T.grad_if_needed(vid)) {
                    for (std::size_t j = 0; j < idx.size(); ++j) {
                      (*gm)(idx[j], 0) += g(static_cast<Index>(j), 0);
                    }
                  }
                });
}

// Embedding-style lookup: out.row(j) = table.row(ids[j]).
template <typename S>
Var<S> gather_rows(Var<S> table, std::vector<Index> ids) {
  Tape<S>& t = *table.tape;
  Matrix<S> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= table.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[j]) + " out of range for " +
                       shape_of(table.value()));
    }
    out.row(static_cast<Index>(j)) = table.value().row(ids[j]);
  }
  auto tid = table.id;
  return t.push(std::move(out), t.needs_grad(tid),
                [tid, ids = std::move(ids)](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  if (auto* gm = T.grad_if_needed(tid)) {
                    for (std::size_t j = 0; j < ids.size(); ++j) {
                      gm->row(ids[j]) += g.row(static_cast<Index>(j));
                    }
                  }
                });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape<S>& t = *parts[0].tape;
  Index rows = parts[0].rows(), cols = 0;
  bool ng = false;
  for (auto p : parts) {
    if (p.tape != &t) throw ShapeError("concat_cols: inputs on different tapes");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_of(parts[0].value()) + " vs " +
                       shape_of(p.value()));
    }
    cols += p.cols();
    ng = ng || t.needs_grad(p.id);
  }
  Matrix<S> out(rows, cols);
  std::vector<std::pair<std::int32_t, Index>> layout;  // (id, col offset)
  Index off = 0;
  for (auto p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    layout.emplace_back(p.id, off);
    off += p.cols();
  }
  return t.push(std::move(out), ng,
                [layout = std::move(layout)](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  for (std::size_t j = 0; j < layout.size(); ++j) {
                    auto [id, o] = layout[j];
                    Index w = (j + 1 < layout.size() ? layout[j + 1].second : g.cols()) - o;
                    T.accumulate(id, g.middleCols(o, w));
                  }
                });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape<S>& t = *parts[0].tape;
  Index cols = parts[0].cols(), rows = 0;
  bool ng = false;
  for (auto p : parts) {
    if (p.tape != &t) throw ShapeError("concat_rows: inputs on different tapes");
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + shape_of(parts[0].value()) + " vs " +
                       shape_of(p.value()));
    }
    rows += p.rows();
    ng = ng || t.needs_grad(p.id);
  }
  Matrix<S> out(rows, cols);
  std::vector<std::pair<std::int32_t, Index>> layout;  // (id, row offset)
  Index off = 0;
  for (auto p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    layout.emplace_back(p.id, off);
    off += p.rows();
  }
  return t.push(std::move(out), ng,
                [layout = std::move(layout)](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  for (std::size_t j = 0; j < layout.size(); ++j) {
                    auto [id, o] = layout[j];
                    Index h = (j + 1 < layout.size() ? layout[j + 1].second : g.rows()) - o;
                    T.accumulate(id, g.middleRows(o, h));
                  }
                });
}

// Stack column vectors as the rows of a matrix: out.row(i) = vecs[i]^T.
template <typename S>
Var<S> stack_rows(const std::vector<Var<S>>& vecs) {
  if (vecs.empty()) throw ShapeError("stack_rows: no inputs");
  Tape<S>& t = *vecs[0].tape;
  Index d = vecs[0].rows();
  bool ng = false;
  for (auto v : vecs) {
    if (v.tape != &t) throw ShapeError("stack_rows: inputs on different tapes");
    detail::require_vector("stack_rows", v);
    if (v.rows() != d) {
      throw ShapeError("stack_rows: length mismatch " + shape_of(vecs[0].value()) + " vs " +
                       shape_of(v.value()));
    }
    ng = ng || t.needs_grad(v.id);
  }
  Matrix<S> out(static_cast<Index>(vecs.size()), d);
  std::vector<std::int32_t> ids;
  ids.reserve(vecs.size());
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    out.row(static_cast<Index>(i)) = vecs[i].value().transpose();
    ids.push_back(vecs[i].id);
  }
  return t.push(std::move(out), ng,
                [ids = std::move(ids)](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    T.accumulate(ids[i], g.row(static_cast<Index>(i)).transpose());
                  }
                });
}

// ---------------------------------------------------------------------------
// Sequence ops
// ---------------------------------------------------------------------------

namespace detail {
// im2row for a width-3 same-padded window: out.row(t) = [x_{t-1}, x_t, x_{t+1}]
// with zero rows past the edges.
template <typename S>
Matrix<S> window3(const Matrix<S>& x) {
  const Index L = x.rows(), w = x.cols();
  Matrix<S> r = Matrix<S>::Zero(L, 3 * w);
  if (L > 1) r.block(1, 0, L - 1, w) = x.topRows(L - 1);
  r.middleCols(w, w) = x;
  if (L > 1) r.block(0, 2 * w, L - 1, w) = x.bottomRows(L - 1);
  return r;
}
}  // namespace detail

// Width-3 same-padded convolution over time. x: L x w, filters: F x 3w,
// bias: F x 1; out: L x F with out.row(t) = filters * [x_{t-1};x_t;x_{t+1}] + bias.
template <typename S>
Var<S> conv1d_same3(Var<S> x, Var<S> filters, Var<S> bias) {
  Tape<S>& t = detail::same_tape(x, filters);
  detail::require_vector("conv1d_same3", bias);
  const Index w = x.cols();
  if (filters.cols() != 3 * w || filters.rows() != bias.rows()) {
    throw ShapeError("conv1d_same3: filters " + shape_of(filters.value()) + " do not match input " +
                     shape_of(x.value()) + " and bias " + shape_of(bias.value()));
  }
  Matrix<S> windows = detail::window3<S>(x.value());
  Matrix<S> out = windows * filters.value().transpose();
  out.rowwise() += bias.value().transpose().row(0);
  bool ng = t.needs_grad(x.id) || t.needs_grad(filters.id) || t.needs_grad(bias.id);
  auto xid = x.id, fid = filters.id, bid = bias.id;
  return t.push(
      std::move(out), ng,
      [xid, fid, bid, w](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
        const Index L = g.rows();
        if (T.needs_grad(fid)) {
          T.accumulate(fid, g.transpose() * detail::window3<S>(T.value(xid)));
        }
        if (T.needs_grad(bid)) T.accumulate(bid, g.colwise().sum().transpose());
        if (auto* gx = T.grad_if_needed(xid)) {
          Matrix<S> gw = g * T.value(fid);  // L x 3w
          // Window block k of row t came from x row t + (k - 1).
          if (L > 1) gx->topRows(L - 1) += gw.block(1, 0, L - 1, w);
          *gx += gw.middleCols(w, w);
          if (L > 1) gx->bottomRows(L - 1) += gw.block(0, 2 * w, L - 1, w);
        }
      });
}

// Columnwise max over rows; the backward pass routes the gradient to the
// first row attaining each column's maximum.
template <typename S>
Var<S> max_over_time(Var<S> m) {
  Tape<S>& t = *m.tape;
  if (m.rows() < 1) throw ShapeError("max_over_time: empty input");
  const auto& x = m.value();
  Matrix<S> out(m.cols(), 1);
  std::vector<Index> argmax(static_cast<std::size_t>(m.cols()));
  for (Index j = 0; j < m.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < m.rows(); ++i) {
      if (x(i, j) > x(best, j)) best = i;  // strict: ties keep the first row
    }
    argmax[static_cast<std::size_t>(j)] = best;
    out(j, 0) = x(best, j);
  }
  auto mid = m.id;
  return t.push(std::move(out), t.needs_grad(mid),
                [mid, argmax = std::move(argmax)](Tape<S>& T, const Matrix<S>& g,
                                                  const Matrix<S>&) {
                  if (auto* gm = T.grad_if_needed(mid)) {
                    for (Index j = 0; j < g.rows(); ++j) {
                      (*gm)(argmax[static_cast<std::size_t>(j)], j) += g(j, 0);
                    }
                  }
                });
}

// Inverted dropout: zero entries with probability p and scale survivors by
// 1/(1-p) while training; identity at inference. The mask is drawn from rng
// in row-major order, so a fixed seed fixes the mask.
template <typename S>
Var<S> dropout(Var<S> x, double p, SeededRng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) {
    throw ShapeError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  Tape<S>& t = *x.tape;
  Matrix<S> mask(x.rows(), x.cols());
  const S keep_scale = S(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng.bernoulli(p) ? S(0) : keep_scale;
    }
  }
  Matrix<S> out = x.value().cwiseProduct(mask);
  auto xid = x.id;
  return t.push(std::move(out), t.needs_grad(xid),
                [xid, mask = std::move(mask)](Tape<S>& T, const Matrix<S>& g, const Matrix<S>&) {
                  T.accumulate(xid, g.cwiseProduct(mask));
                });
}

// ---------------------------------------------------------------------------
// Conveniences
// ---------------------------------------------------------------------------

template <typename S>
Var<S> one_minus(Var<S> a) {
  Tape<S>& t = *a.tape;
  return sub(t.constant(Matrix<S>::Ones(a.rows(), a.cols())), a);
}

template <typename S>
Var<S> dot(Var<S> a, Var<S> b) {
  detail::require_vector("dot", a);
  detail::require_vector("dot", b);
  return matmul(transpose(a), b);
}

template <typename S>
S scalar_value(Var<S> v) {
  if (v.size() != 1) throw ShapeError("scalar_value: not a scalar, got " + shape_of(v.value()));
  return v.value()(0, 0);
}

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) {
  return sub(a, b);
}
template <typename S>
Var<S> operator-(Var<S> a) {
  return neg(a);
}
template <typename S>
Var<S> operator*(Var<S> a, Var<S> b) {
  return matmul(a, b);
}
template <typename S>
Var<S> operator*(S c, Var<S> a) {
  return scale(a, c);
}
template <typename S>
Var<S> operator*(Var<S> a, S c) {
  return scale(a, c);
}

// Plain SGD update; lr = 0 leaves the parameters unchanged.
template <typename S>
void sgd_step(Matrix<S>& param, const Matrix<S>& grad, S lr) {
  if (lr < S(0)) throw ShapeError("sgd_step: negative learning rate");
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError("sgd_step: shape mismatch " + shape_of(param) + " vs " + shape_of(grad));
  }
  param -= lr * grad;
}

}  // namespace rdsgan
