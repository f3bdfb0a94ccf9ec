// avsr/autodiff.hpp

// Copyright 2026  avsr-lab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over row-major matrices. A Tape records every
// op in execution order; backward() walks it in exact reverse. Values are
// stored in T (float for training, double for gradient checks); explicit
// reductions accumulate in double and in a fixed order, so repeated runs give
// bit-identical gradients.

#pragma once

#include <memory>
#include <numeric>

#include "avsr/common.hpp"

namespace avsr {

/// A named parameter (or any leaf) with an optional gradient buffer.
/// Rank-1 tensors are viewed as a single row.
template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;
  Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    values.assign(numel(), T(0));
  }

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  Eigen::Index rows() const { return shape.size() <= 1 ? 1 : static_cast<Eigen::Index>(shape[0]); }
  Eigen::Index cols() const {
    if (shape.empty()) return 1;
    return static_cast<Eigen::Index>(shape.size() == 1 ? shape[0] : numel() / shape[0]);
  }

  Eigen::Map<Mat<T>> mat() { return {values.data(), rows(), cols()}; }
  Eigen::Map<const Mat<T>> mat() const { return {values.data(), rows(), cols()}; }
  Eigen::Map<Mat<T>> grad_mat() {
    ensure_grad();
    return {grad.data(), rows(), cols()};
  }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
  void zero_grad() { grad.assign(values.size(), T(0)); }
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) { return str_cat("(", r, "x", c, ")"); }

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T> *tape = nullptr;
  int id = -1;

  const Mat<T> &value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::string shape() const { return shape_str(rows(), cols()); }
};

template <typename T>
class Tape {
 public:
  struct Node {
    Mat<T> value;
    Mat<T> grad;  // allocated lazily during backward
    std::function<void(Tape &, Node &)> backward;
    Tensor<T> *param = nullptr;
  };

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  std::size_t size() const { return nodes_.size(); }
  const Mat<T> &value(int id) const { return nodes_[id].value; }
  const Mat<T> &grad(int id) const { return nodes_[id].grad; }

  Var<T> constant(Mat<T> m) { return push(std::move(m), nullptr); }

  /// Leaf that accumulates its gradient into `p.grad` on backward().
  Var<T> param(Tensor<T> &p) {
    p.ensure_grad();
    Var<T> v = push(Mat<T>(p.mat()), nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var<T> push(Mat<T> value, std::function<void(Tape &, Node &)> bw) {
    nodes_.push_back(Node{std::move(value), Mat<T>(), std::move(bw), nullptr});
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
  }

  /// Gradient slot of node `id`, zero-initialized on first use.
  Mat<T> &grad_slot(int id) {
    Node &n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Propagates d(loss)/d(.) to every parameter leaf on the tape. Gradients
  /// are added to existing parameter gradients (call zero_grad() between steps).
  void backward(Var<T> loss) {
    if (loss.tape != this) fail("backward: loss belongs to a different tape");
    const Mat<T> &lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) fail("backward: loss must be a scalar, got shape ", loss.shape());
    for (auto &n : nodes_) n.grad.resize(0, 0);
    grad_slot(loss.id)(0, 0) = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node &n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n);
      if (n.param) {
        auto g = n.param->grad_mat();
        g += n.grad;
      }
    }
  }

 private:
  std::vector<Node> nodes_;
};

namespace ad {

template <typename T>
void check_same_tape(const Var<T> &a, const Var<T> &b, const char *op) {
  if (a.tape != b.tape) fail(op, ": operands belong to different tapes");
}

template <typename T>
using NodeT = typename Tape<T>::Node;

/// a (n x k) * b (k x m)
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) fail("matmul: shape mismatch ", a.shape(), " * ", b.shape());
  Mat<T> out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), [ia, ib](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ia).noalias() += n.grad * tp.value(ib).transpose();
    tp.grad_slot(ib).noalias() += tp.value(ia).transpose() * n.grad;
  });
}

/// x (T x in) times W^T, with W stored as (out x in).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  check_same_tape(x, w, "linear");
  if (x.cols() != w.cols()) fail("linear: shape mismatch, input ", x.shape(), " weight ", w.shape());
  Mat<T> out = x.value() * w.value().transpose();
  const int ix = x.id, iw = w.id;
  return x.tape->push(std::move(out), [ix, iw](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ix).noalias() += n.grad * tp.value(iw);
    tp.grad_slot(iw).noalias() += n.grad.transpose() * tp.value(ix);
  });
}

namespace detail {
/// Column sums of g accumulated in double, rows in order.
template <typename T>
Mat<T> column_sums(const Mat<T> &g) {
  std::vector<double> acc(static_cast<std::size_t>(g.cols()), 0.0);
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) acc[c] += static_cast<double>(g(r, c));
  Mat<T> out(1, g.cols());
  for (Eigen::Index c = 0; c < g.cols(); ++c) out(0, c) = static_cast<T>(acc[c]);
  return out;
}
}  // namespace detail

/// Adds a 1 x m bias row to every row of x.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  check_same_tape(x, b, "add_bias");
  if (b.rows() != 1 || b.cols() != x.cols()) fail("add_bias: shape mismatch ", x.shape(), " + ", b.shape());
  Mat<T> out = x.value();
  out.rowwise() += b.value().row(0);
  const int ix = x.id, ib = b.id;
  return x.tape->push(std::move(out), [ix, ib](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ix) += n.grad;
    tp.grad_slot(ib) += detail::column_sums(n.grad);
  });
}

/// x W^T + b.
template <typename T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  check_same_tape(x, w, "affine");
  check_same_tape(x, b, "affine");
  if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows())
    fail("affine: shape mismatch, input ", x.shape(), " weight ", w.shape(), " bias ", b.shape());
  Mat<T> out = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  const int ix = x.id, iw = w.id, ib = b.id;
  return x.tape->push(std::move(out), [ix, iw, ib](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ix).noalias() += n.grad * tp.value(iw);
    tp.grad_slot(iw).noalias() += n.grad.transpose() * tp.value(ix);
    tp.grad_slot(ib) += detail::column_sums(n.grad);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "add");
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail("add: shape mismatch ", a.shape(), " + ", b.shape());
  Mat<T> out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), [ia, ib](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ia) += n.grad;
    tp.grad_slot(ib) += n.grad;
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Mat<T> out = a.value() * s;
  const int ia = a.id;
  return a.tape->push(std::move(out), [ia, s](Tape<T> &tp, NodeT<T> &n) { tp.grad_slot(ia) += n.grad * s; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Mat<T> out = a.value().cwiseMax(T(0));
  const int ia = a.id;
  return a.tape->push(std::move(out), [ia](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ia) += (tp.value(ia).array() > T(0)).select(n.grad, T(0));
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Mat<T> out = a.value().unaryExpr([](T x) { return sigmoid_scalar(x); });
  const int ia = a.id;
  return a.tape->push(std::move(out), [ia](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ia).array() += n.grad.array() * n.value.array() * (T(1) - n.value.array());
  });
}

/// Element-wise product.
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "hadamard");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail("hadamard: shape mismatch ", a.shape(), " . ", b.shape());
  Mat<T> out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), [ia, ib](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ia) += n.grad.cwiseProduct(tp.value(ib));
    tp.grad_slot(ib) += n.grad.cwiseProduct(tp.value(ia));
  });
}

/// Concatenation along the last (column) dimension.
template <typename T>
Var<T> concat(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "concat");
  if (a.rows() != b.rows()) fail("concat: row mismatch ", a.shape(), " | ", b.shape());
  Mat<T> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape->push(std::move(out), [ia, ib, ca, cb](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ia) += n.grad.leftCols(ca);
    tp.grad_slot(ib) += n.grad.rightCols(cb);
  });
}

/// Maps a T x D sequence to T x (|offsets| D): row t is the concatenation of
/// rows t+o for each offset o, with indices clamped to [0, T-1].
template <typename T>
Var<T> splice(Var<T> x, const std::vector<int> &offsets) {
  if (offsets.empty()) fail("splice: empty offset list");
  const Eigen::Index rows = x.rows(), d = x.cols();
  if (rows == 0) fail("splice: empty input");
  const Eigen::Index k = static_cast<Eigen::Index>(offsets.size());
  auto src = [rows](Eigen::Index t, int o) {
    return std::clamp<Eigen::Index>(t + o, 0, rows - 1);
  };
  Mat<T> out(rows, k * d);
  const Mat<T> &in = x.value();
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index j = 0; j < k; ++j) out.block(t, j * d, 1, d) = in.row(src(t, offsets[j]));
  const int ix = x.id;
  return x.tape->push(std::move(out), [ix, offsets, rows, d, k, src](Tape<T> &tp, NodeT<T> &n) {
    Mat<T> &g = tp.grad_slot(ix);
    for (Eigen::Index t = 0; t < rows; ++t)
      for (Eigen::Index j = 0; j < k; ++j) g.row(src(t, offsets[j])) += n.grad.block(t, j * d, 1, d);
  });
}

/// Row-wise log-softmax; normalizers computed in double.
template <typename T>
Var<T> log_softmax(Var<T> a) {
  const Mat<T> &in = a.value();
  Mat<T> out(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < in.cols(); ++c) mx = std::max(mx, static_cast<double>(in(r, c)));
    double s = 0.0;
    for (Eigen::Index c = 0; c < in.cols(); ++c) s += std::exp(static_cast<double>(in(r, c)) - mx);
    const double lse = mx + std::log(s);
    for (Eigen::Index c = 0; c < in.cols(); ++c) out(r, c) = static_cast<T>(static_cast<double>(in(r, c)) - lse);
  }
  const int ia = a.id;
  return a.tape->push(std::move(out), [ia](Tape<T> &tp, NodeT<T> &n) {
    Mat<T> &g = tp.grad_slot(ia);
    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
      double gs = 0.0;
      for (Eigen::Index c = 0; c < n.value.cols(); ++c) gs += static_cast<double>(n.grad(r, c));
      for (Eigen::Index c = 0; c < n.value.cols(); ++c)
        g(r, c) += static_cast<T>(static_cast<double>(n.grad(r, c)) - std::exp(static_cast<double>(n.value(r, c))) * gs);
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  double s = 0.0;
  const Mat<T> &in = a.value();
  for (Eigen::Index r = 0; r < in.rows(); ++r)
    for (Eigen::Index c = 0; c < in.cols(); ++c) s += static_cast<double>(in(r, c));
  Mat<T> out(1, 1);
  out(0, 0) = static_cast<T>(s);
  const int ia = a.id;
  return a.tape->push(std::move(out), [ia](Tape<T> &tp, NodeT<T> &n) { tp.grad_slot(ia).array() += n.grad(0, 0); });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const double count = static_cast<double>(a.value().size());
  if (count == 0) fail("mean: empty input");
  return scale(sum(a), static_cast<T>(1.0 / count));
}

/// Mean squared error over all elements.
template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "mse");
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail("mse: shape mismatch ", a.shape(), " vs ", b.shape());
  const double count = static_cast<double>(a.value().size());
  if (count == 0) fail("mse: empty input");
  double s = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double d = static_cast<double>(a.value()(r, c)) - static_cast<double>(b.value()(r, c));
      s += d * d;
    }
  Mat<T> out(1, 1);
  out(0, 0) = static_cast<T>(s / count);
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), [ia, ib, count](Tape<T> &tp, NodeT<T> &n) {
    const T k = static_cast<T>(2.0 * static_cast<double>(n.grad(0, 0)) / count);
    Mat<T> diff = tp.value(ia) - tp.value(ib);
    tp.grad_slot(ia) += k * diff;
    tp.grad_slot(ib) -= k * diff;
  });
}

/// Sum over rows of x(t, labels[t]).
template <typename T>
Var<T> pick_sum(Var<T> x, const std::vector<int> &labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    fail("pick_sum: ", labels.size(), " labels for ", x.rows(), " rows");
  double s = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || labels[t] >= x.cols()) fail("pick_sum: label ", labels[t], " out of range at row ", t);
    s += static_cast<double>(x.value()(static_cast<Eigen::Index>(t), labels[t]));
  }
  Mat<T> out(1, 1);
  out(0, 0) = static_cast<T>(s);
  const int ix = x.id;
  return x.tape->push(std::move(out), [ix, labels](Tape<T> &tp, NodeT<T> &n) {
    Mat<T> &g = tp.grad_slot(ix);
    for (std::size_t t = 0; t < labels.size(); ++t) g(static_cast<Eigen::Index>(t), labels[t]) += n.grad(0, 0);
  });
}

/// Scalar node whose value and input-gradient were computed outside the tape
/// (e.g. by forward-backward over an HMM graph).
template <typename T>
Var<T> external_loss(Var<T> x, double value, Mat<T> grad) {
  if (grad.rows() != x.rows() || grad.cols() != x.cols())
    fail("external_loss: gradient ", shape_str(grad.rows(), grad.cols()), " does not match input ", x.shape());
  Mat<T> out(1, 1);
  out(0, 0) = static_cast<T>(value);
  const int ix = x.id;
  return x.tape->push(std::move(out), [ix, grad = std::move(grad)](Tape<T> &tp, NodeT<T> &n) {
    tp.grad_slot(ix) += grad * n.grad(0, 0);
  });
}

/// Running statistics owned by a batchnorm layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.99;
  double epsilon = 1e-5;
};

/// Per-feature normalization over the rows of x, then gamma * xhat + beta.
/// In training mode batch statistics are used (and the running stats are
/// updated when `stats` is non-null); in eval mode the running stats are used.
template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats *stats, bool train) {
  const Eigen::Index rows = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    fail("batchnorm: parameter shapes ", gamma.shape(), ", ", beta.shape(), " do not match input ", x.shape());
  const double eps = stats ? stats->epsilon : 1e-5;
  std::vector<double> mu(d, 0.0), var(d, 0.0);
  const Mat<T> &in = x.value();
  if (train) {
    if (rows == 0) fail("batchnorm: empty input");
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < d; ++c) mu[c] += in(r, c);
    for (auto &m : mu) m /= static_cast<double>(rows);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < d; ++c) {
        const double z = in(r, c) - mu[c];
        var[c] += z * z;
      }
    for (auto &v : var) v /= static_cast<double>(rows);
    if (stats) {
      if (stats->mean.size() != static_cast<std::size_t>(d)) {
        stats->mean.assign(d, 0.0);
        stats->var.assign(d, 1.0);
      }
      for (Eigen::Index c = 0; c < d; ++c) {
        stats->mean[c] = stats->momentum * stats->mean[c] + (1.0 - stats->momentum) * mu[c];
        stats->var[c] = stats->momentum * stats->var[c] + (1.0 - stats->momentum) * var[c];
      }
    }
  } else {
    if (!stats || stats->mean.size() != static_cast<std::size_t>(d)) {
      var.assign(d, 1.0);
    } else {
      mu = stats->mean;
      var = stats->var;
    }
  }
  std::vector<double> inv_std(d);
  for (Eigen::Index c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Mat<T> xhat(rows, d), out(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      xhat(r, c) = static_cast<T>((in(r, c) - mu[c]) * inv_std[c]);
      out(r, c) = gamma.value()(0, c) * xhat(r, c) + beta.value()(0, c);
    }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->push(std::move(out), [ix, ig, ib, xhat = std::move(xhat), inv_std, train, rows,
                                       d](Tape<T> &tp, NodeT<T> &n) {
    Mat<T> &gg = tp.grad_slot(ig);
    Mat<T> &gb = tp.grad_slot(ib);
    Mat<T> &gx = tp.grad_slot(ix);
    for (Eigen::Index c = 0; c < d; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        sg += n.grad(r, c);
        sgx += static_cast<double>(n.grad(r, c)) * xhat(r, c);
      }
      gb(0, c) += static_cast<T>(sg);
      gg(0, c) += static_cast<T>(sgx);
      const double gam = tp.value(ig)(0, c);
      for (Eigen::Index r = 0; r < rows; ++r) {
        double gxr;
        if (train)
          gxr = gam * inv_std[c] * (n.grad(r, c) - sg / rows - xhat(r, c) * sgx / rows);
        else
          gxr = gam * inv_std[c] * n.grad(r, c);
        gx(r, c) += static_cast<T>(gxr);
      }
    }
  });
}

}  // namespace ad

/// Global-norm clipping followed by p <- p - lr * (g + l2 * p).
/// Returns the gradient norm before clipping.
template <typename T>
double sgd_step(const std::vector<Tensor<T> *> &params, double lr, double l2, double clip) {
  if (!(lr > 0.0)) fail("sgd_step: learning rate must be > 0");
  double sq = 0.0;
  for (const auto *p : params) {
    if (p->grad.size() != p->values.size()) continue;
    for (T g : p->grad) {
      if (!std::isfinite(static_cast<double>(g))) fail("sgd_step: non-finite gradient in parameter '", p->name, "'");
      sq += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double factor = (std::isfinite(clip) && clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  for (auto *p : params) {
    const bool has_grad = p->grad.size() == p->values.size();
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      const double g = has_grad ? factor * static_cast<double>(p->grad[i]) : 0.0;
      p->values[i] = static_cast<T>(p->values[i] - lr * (g + l2 * p->values[i]));
    }
  }
  return norm;
}


enum class OptimizerKind { kSgd, kAdam };

inline OptimizerKind parse_optimizer(const std::string &s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  fail("unknown optimizer '", s, "' (expected sgd or adam)");
}
inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 2e-3;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 0.0;
  double clip = 5.0;  // global gradient-norm clip, <= 0 disables
};

/// Stateful first-order optimizer over a fixed parameter list. The update
/// is computed in double and applied in parameter order.
template <typename T>
class Optimizer {
 public:
  Optimizer(std::vector<Tensor<T> *> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) fail("optimizer: learning rate must be > 0");
    for (auto *p : params_) {
      m_.emplace_back(p->values.size(), 0.0);
      if (cfg_.kind == OptimizerKind::kAdam) v_.emplace_back(p->values.size(), 0.0);
    }
  }

  const OptimizerConfig &config() const { return cfg_; }
  long steps() const { return steps_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

  /// Applies one update (descent on the stored gradients); returns the
  /// gradient norm before clipping.
  double step() {
    double sq = 0.0;
    for (const auto *p : params_) {
      if (p->grad.size() != p->values.size()) continue;
      for (T g : p->grad) {
        if (!std::isfinite(static_cast<double>(g))) fail("optimizer: non-finite gradient in parameter '", p->name, "'");
        sq += static_cast<double>(g) * g;
      }
    }
    const double norm = std::sqrt(sq);
    const double factor = (cfg_.clip > 0.0 && norm > cfg_.clip) ? cfg_.clip / norm : 1.0;
    ++steps_;
    const double lr = cfg_.learning_rate;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T> &p = *params_[k];
      const bool has_grad = p.grad.size() == p.values.size();
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double g = (has_grad ? factor * static_cast<double>(p.grad[i]) : 0.0) + cfg_.l2 * p.values[i];
        double upd;
        if (cfg_.kind == OptimizerKind::kSgd) {
          m_[k][i] = cfg_.momentum * m_[k][i] + g;
          upd = lr * m_[k][i];
        } else {
          m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
          v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
          upd = lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + cfg_.epsilon);
        }
        p.values[i] = static_cast<T>(p.values[i] - upd);
      }
    }
    return norm;
  }

 private:
  std::vector<Tensor<T> *> params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long steps_ = 0;
};

}  // namespace avsr
