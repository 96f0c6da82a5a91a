// Reverse-mode autodiff over Tensor values. A Tape records one forward pass
// (define-by-run); backward() replays the recorded ops in reverse order.
// Gradients accumulate additively, so reusing a Var is safe.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lexnmt/rng.hpp"
#include "lexnmt/tensor.hpp"

namespace lexnmt {

// A trainable leaf: value plus persistent gradient storage the optimizer
// reads. Gradients survive across tapes until zero_grads() is called.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool is_bias = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool bias = false)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), is_bias(bias) {}
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->grad.fill(T(0));
}

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr; }
};

namespace detail {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const EMat<T>> as_mat(const Tensor<T>& t) {
  return {t.data(), t.rows(), t.cols()};
}

template <typename T>
Eigen::Map<EMat<T>> as_mat(Tensor<T>& t) {
  return {t.data(), t.rows(), t.cols()};
}

}  // namespace detail

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> input(Parameter<T>& p) {
    slots_.push_back(Slot{Tensor<T>(), &p, Tensor<T>(), false});
    return Var<T>{this, static_cast<int>(slots_.size()) - 1};
  }

  Var<T> constant(Tensor<T> v) {
    slots_.push_back(Slot{std::move(v), nullptr, Tensor<T>(), false});
    return Var<T>{this, static_cast<int>(slots_.size()) - 1};
  }

  // Adds a computed node; the matching backward rule follows via record().
  Var<T> emit(Tensor<T> value) {
    if (debug_checks()) value.assert_finite("tape node");
    slots_.push_back(Slot{std::move(value), nullptr, Tensor<T>(), false});
    return Var<T>{this, static_cast<int>(slots_.size()) - 1};
  }

  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  const Tensor<T>& value(int id) const {
    const Slot& s = slots_[id];
    return s.param ? s.param->value : s.value;
  }
  const Tensor<T>& value(Var<T> v) const { return value(v.id); }

  // Gradient slot, allocated (zero) on first touch.
  Tensor<T>& grad(int id) {
    Slot& s = slots_[id];
    if (s.param) return s.param->grad;
    if (!s.grad_ready) {
      s.grad = Tensor<T>(s.value.shape());
      s.grad_ready = true;
    }
    return s.grad;
  }
  Tensor<T>& grad(Var<T> v) { return grad(v.id); }

  // Null while no gradient has flowed into the node (it is identically zero),
  // letting backward rules skip dead branches.
  Tensor<T>* maybe_grad(int id) {
    Slot& s = slots_[id];
    if (s.param) return &s.param->grad;
    return s.grad_ready ? &s.grad : nullptr;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: var from another tape");
    if (value(loss.id).size() != 1) {
      throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                  shape_str(value(loss.id).shape()));
    }
    grad(loss.id)[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  int num_nodes() const { return static_cast<int>(slots_.size()); }
  int num_ops() const { return static_cast<int>(ops_.size()); }

 private:
  struct Slot {
    Tensor<T> value;
    Parameter<T>* param;
    Tensor<T> grad;
    bool grad_ready;
  };
  // Deque: references returned by value()/grad() stay valid as nodes are added.
  std::deque<Slot> slots_;
  std::vector<std::function<void()>> ops_;
};

namespace detail {

template <typename T>
Tape<T>* same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": operands from different tapes");
  }
  return a.tape;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

// ---- matrix products ------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>* t = detail::same_tape(a, b, "matmul");
  const Tensor<T>& av = t->value(a);
  const Tensor<T>& bv = t->value(b);
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor<T> out({av.rows(), bv.cols()});
  detail::as_mat(out) = detail::as_mat(av) * detail::as_mat(bv);
  Var<T> o = t->emit(std::move(out));
  t->record([t, ai = a.id, bi = b.id, oi = o.id]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    auto gm = detail::as_mat(*static_cast<const Tensor<T>*>(g));
    detail::as_mat(t->grad(ai)) += gm * detail::as_mat(t->value(bi)).transpose();
    detail::as_mat(t->grad(bi)) += detail::as_mat(t->value(ai)).transpose() * gm;
  });
  return o;
}

// a * b^T with b stored [n x k]; avoids materializing transposed tables.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>* t = detail::same_tape(a, b, "matmul_nt");
  const Tensor<T>& av = t->value(a);
  const Tensor<T>& bv = t->value(b);
  if (av.cols() != bv.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimensions disagree, " +
                                shape_str(av.shape()) + " x " + shape_str(bv.shape()) + "^T");
  }
  Tensor<T> out({av.rows(), bv.rows()});
  detail::as_mat(out) = detail::as_mat(av) * detail::as_mat(bv).transpose();
  Var<T> o = t->emit(std::move(out));
  t->record([t, ai = a.id, bi = b.id, oi = o.id]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    auto gm = detail::as_mat(*static_cast<const Tensor<T>*>(g));
    detail::as_mat(t->grad(ai)) += gm * detail::as_mat(t->value(bi));
    detail::as_mat(t->grad(bi)) += gm.transpose() * detail::as_mat(t->value(ai));
  });
  return o;
}

// ---- elementwise ----------------------------------------------------------

// add supports equal shapes, or a rank-1 bias broadcast over the rows of a
// rank-2 left operand.
template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>* t = detail::same_tape(a, b, "add");
  const Tensor<T>& av = t->value(a);
  const Tensor<T>& bv = t->value(b);
  if (av.rank() == 2 && bv.rank() == 1) {
    if (av.cols() != bv.cols()) {
      throw std::invalid_argument("add: bias length " + shape_str(bv.shape()) +
                                  " does not match " + shape_str(av.shape()));
    }
    Tensor<T> out = av;
    const int m = av.rows(), n = av.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.at(i, j) += bv[j];
    Var<T> o = t->emit(std::move(out));
    t->record([t, ai = a.id, bi = b.id, oi = o.id, m, n]() {
      Tensor<T>* g = t->maybe_grad(oi);
      if (!g) return;
      Tensor<T>& ga = t->grad(ai);
      Tensor<T>& gb = t->grad(bi);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          ga.at(i, j) += g->at(i, j);
          gb[j] += g->at(i, j);
        }
    });
    return o;
  }
  detail::require_same_shape(av, bv, "add");
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var<T> o = t->emit(std::move(out));
  t->record([t, ai = a.id, bi = b.id, oi = o.id]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& ga = t->grad(ai);
    Tensor<T>& gb = t->grad(bi);
    for (std::int64_t i = 0; i < g->size(); ++i) {
      ga[i] += (*g)[i];
      gb[i] += (*g)[i];
    }
  });
  return o;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>* t = detail::same_tape(a, b, "sub");
  const Tensor<T>& av = t->value(a);
  const Tensor<T>& bv = t->value(b);
  detail::require_same_shape(av, bv, "sub");
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Var<T> o = t->emit(std::move(out));
  t->record([t, ai = a.id, bi = b.id, oi = o.id]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& ga = t->grad(ai);
    Tensor<T>& gb = t->grad(bi);
    for (std::int64_t i = 0; i < g->size(); ++i) {
      ga[i] += (*g)[i];
      gb[i] -= (*g)[i];
    }
  });
  return o;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>* t = detail::same_tape(a, b, "mul");
  const Tensor<T>& av = t->value(a);
  const Tensor<T>& bv = t->value(b);
  detail::require_same_shape(av, bv, "mul");
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var<T> o = t->emit(std::move(out));
  t->record([t, ai = a.id, bi = b.id, oi = o.id]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    const Tensor<T>& av2 = t->value(ai);
    const Tensor<T>& bv2 = t->value(bi);
    Tensor<T>& ga = t->grad(ai);
    Tensor<T>& gb = t->grad(bi);
    for (std::int64_t i = 0; i < g->size(); ++i) {
      ga[i] += (*g)[i] * bv2[i];
      gb[i] += (*g)[i] * av2[i];
    }
  });
  return o;
}

// x[m x n] scaled per row by w (rank-1, length m).
template <typename T>
Var<T> mul_colvec(Var<T> x, Var<T> w) {
  Tape<T>* t = detail::same_tape(x, w, "mul_colvec");
  const Tensor<T>& xv = t->value(x);
  const Tensor<T>& wv = t->value(w);
  if (wv.size() != xv.rows()) {
    throw std::invalid_argument("mul_colvec: weight length " + shape_str(wv.shape()) +
                                " does not match rows of " + shape_str(xv.shape()));
  }
  const int m = xv.rows(), n = xv.cols();
  Tensor<T> out = xv;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) *= wv[i];
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, wi = w.id, oi = o.id, m, n]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    const Tensor<T>& xv2 = t->value(xi);
    const Tensor<T>& wv2 = t->value(wi);
    Tensor<T>& gx = t->grad(xi);
    Tensor<T>& gw = t->grad(wi);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        gx.at(i, j) += g->at(i, j) * wv2[i];
        gw[i] += g->at(i, j) * xv2.at(i, j);
      }
  });
  return o;
}

namespace detail {

template <typename T, typename F, typename DF>
Var<T> unary_op(Var<T> x, F fwd, DF bwd_from_xy) {
  Tape<T>* t = x.tape;
  Tensor<T> out = t->value(x);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = fwd(out[i]);
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, bwd_from_xy]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    const Tensor<T>& xv = t->value(xi);
    const Tensor<T>& yv = t->value(oi);
    Tensor<T>& gx = t->grad(xi);
    for (std::int64_t i = 0; i < g->size(); ++i)
      gx[i] += (*g)[i] * bwd_from_xy(xv[i], yv[i]);
  });
  return o;
}

}  // namespace detail

template <typename T>
Var<T> tanh_(Var<T> x) {
  return detail::unary_op(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid_(Var<T> x) {
  return detail::unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> exp_(Var<T> x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); },
      [](T, T y) { return y; });
}

template <typename T>
Var<T> log_(Var<T> x) {
  if (debug_checks()) {
    const Tensor<T>& v = x.tape->value(x);
    for (std::int64_t i = 0; i < v.size(); ++i)
      if (!(v[i] > T(0))) throw std::domain_error("log: non-positive input");
  }
  return detail::unary_op(
      x, [](T v) { return std::log(v); },
      [](T xv, T) { return T(1) / xv; });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  return detail::unary_op(
      x, [c](T v) { return c * v; },
      [c](T, T) { return c; });
}

// ---- softmax --------------------------------------------------------------

// Row-wise softmax with max subtraction. Rank-1 input is one row.
template <typename T>
Var<T> softmax_rows(Var<T> x) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  const int m = xv.rows(), n = xv.cols();
  Tensor<T> out = xv;
  for (int i = 0; i < m; ++i) {
    T mx = out.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, out.at(i, j));
    T z = T(0);
    for (int j = 0; j < n; ++j) {
      T e = std::exp(out.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, m, n]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    const Tensor<T>& y = t->value(oi);
    Tensor<T>& gx = t->grad(xi);
    for (int i = 0; i < m; ++i) {
      T dot = T(0);
      for (int j = 0; j < n; ++j) dot += g->at(i, j) * y.at(i, j);
      for (int j = 0; j < n; ++j)
        gx.at(i, j) += y.at(i, j) * (g->at(i, j) - dot);
    }
  });
  return o;
}

template <typename T>
Var<T> log_softmax_rows(Var<T> x) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  const int m = xv.rows(), n = xv.cols();
  Tensor<T> out = xv;
  for (int i = 0; i < m; ++i) {
    T mx = out.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, out.at(i, j));
    T z = T(0);
    for (int j = 0; j < n; ++j) z += std::exp(out.at(i, j) - mx);
    T lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) out.at(i, j) -= lse;
  }
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, m, n]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    const Tensor<T>& y = t->value(oi);
    Tensor<T>& gx = t->grad(xi);
    for (int i = 0; i < m; ++i) {
      T gsum = T(0);
      for (int j = 0; j < n; ++j) gsum += g->at(i, j);
      for (int j = 0; j < n; ++j)
        gx.at(i, j) += g->at(i, j) - std::exp(y.at(i, j)) * gsum;
    }
  });
  return o;
}

// ---- fixed-norm projection ------------------------------------------------

// Squared-norm floor: rows with sum(v^2) below this are scaled by a constant
// instead of normalized, so a zero row never divides by zero. Above the floor
// the projection is exact, keeping effective norms equal to r to rounding.
inline constexpr double kNormGuard = 1e-8;

// Rescales each row of x (rank-1: the whole vector) to Euclidean norm r.
// Backward applies the exact Jacobian (r/|v|)(I - vv^T/|v|^2).
template <typename T>
Var<T> normalize_to_radius(Var<T> x, T r) {
  if (!(r > T(0))) throw std::invalid_argument("normalize_to_radius: r must be positive");
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  const int m = xv.rows(), n = xv.cols();
  Tensor<T> out = xv;
  for (int i = 0; i < m; ++i) {
    T s = T(0);
    for (int j = 0; j < n; ++j) s += out.at(i, j) * out.at(i, j);
    T norm = std::sqrt(std::max(s, T(kNormGuard)));
    T k = r / norm;
    for (int j = 0; j < n; ++j) out.at(i, j) *= k;
  }
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, m, n, r]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    const Tensor<T>& v = t->value(xi);
    Tensor<T>& gx = t->grad(xi);
    for (int i = 0; i < m; ++i) {
      T s = T(0);
      for (int j = 0; j < n; ++j) s += v.at(i, j) * v.at(i, j);
      if (s >= T(kNormGuard)) {
        T norm = std::sqrt(s);
        T vg = T(0);
        for (int j = 0; j < n; ++j) vg += v.at(i, j) * g->at(i, j);
        T k = r / norm;
        for (int j = 0; j < n; ++j)
          gx.at(i, j) += k * (g->at(i, j) - v.at(i, j) * vg / s);
      } else {
        T k = r / std::sqrt(T(kNormGuard));
        for (int j = 0; j < n; ++j) gx.at(i, j) += k * g->at(i, j);
      }
    }
  });
  return o;
}

// ---- gather / scatter -----------------------------------------------------

template <typename T>
Var<T> lookup(Var<T> table, std::vector<int> ids) {
  Tape<T>* t = table.tape;
  const Tensor<T>& tv = t->value(table);
  if (tv.rank() != 2) throw std::invalid_argument("lookup: table must be rank-2");
  const int v = tv.rows(), d = tv.cols();
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::out_of_range("lookup: id " + std::to_string(id) +
                              " outside table with " + std::to_string(v) + " rows");
    }
  }
  const int m = static_cast<int>(ids.size());
  Tensor<T> out({m, d});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = tv.at(ids[i], j);
  Var<T> o = t->emit(std::move(out));
  t->record([t, ti = table.id, oi = o.id, ids = std::move(ids), d]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gt = t->grad(ti);
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j) gt.at(ids[i], j) += g->at(static_cast<int>(i), j);
  });
  return o;
}

// out[i] = x[i, ids[i]]
template <typename T>
Var<T> pick_rows(Var<T> x, std::vector<int> ids) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  if (xv.rank() != 2 || static_cast<int>(ids.size()) != xv.rows()) {
    throw std::invalid_argument("pick_rows: need one id per row of " +
                                shape_str(xv.shape()));
  }
  const int m = xv.rows(), n = xv.cols();
  for (int id : ids) {
    if (id < 0 || id >= n)
      throw std::out_of_range("pick_rows: column " + std::to_string(id) +
                              " outside " + shape_str(xv.shape()));
  }
  Tensor<T> out({m});
  for (int i = 0; i < m; ++i) out[i] = xv.at(i, ids[i]);
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, ids = std::move(ids)]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gx = t->grad(xi);
    for (size_t i = 0; i < ids.size(); ++i)
      gx.at(static_cast<int>(i), ids[i]) += (*g)[static_cast<int>(i)];
  });
  return o;
}

// ---- dropout --------------------------------------------------------------

// Inverted dropout: training scales survivors by 1/(1-p); eval is identity.
template <typename T>
Var<T> dropout(Var<T> x, T p, bool training, Rng& rng) {
  if (p < T(0) || p >= T(1)) throw std::invalid_argument("dropout: need 0 <= p < 1");
  if (!training || p == T(0)) return x;
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  Tensor<T> mask(xv.shape());
  const T keep_scale = T(1) / (T(1) - p);
  for (std::int64_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.bernoulli(static_cast<double>(p)) ? T(0) : keep_scale;
  Tensor<T> out = xv;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, mask = std::move(mask)]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gx = t->grad(xi);
    for (std::int64_t i = 0; i < g->size(); ++i) gx[i] += (*g)[i] * mask[i];
  });
  return o;
}

// ---- shape plumbing -------------------------------------------------------

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  Tape<T>* t = detail::same_tape(a, b, "concat_cols");
  const Tensor<T>& av = t->value(a);
  const Tensor<T>& bv = t->value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
    throw std::invalid_argument("concat_cols: incompatible shapes " +
                                shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const int m = av.rows(), p = av.cols(), q = bv.cols();
  Tensor<T> out({m, p + q});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j) out.at(i, j) = av.at(i, j);
    for (int j = 0; j < q; ++j) out.at(i, p + j) = bv.at(i, j);
  }
  Var<T> o = t->emit(std::move(out));
  t->record([t, ai = a.id, bi = b.id, oi = o.id, m, p, q]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& ga = t->grad(ai);
    Tensor<T>& gb = t->grad(bi);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < p; ++j) ga.at(i, j) += g->at(i, j);
      for (int j = 0; j < q; ++j) gb.at(i, j) += g->at(i, p + j);
    }
  });
  return o;
}

template <typename T>
Var<T> slice_cols(Var<T> x, int c0, int c1) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  if (xv.rank() != 2 || c0 < 0 || c1 > xv.cols() || c0 >= c1) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") for " + shape_str(xv.shape()));
  }
  const int m = xv.rows(), w = c1 - c0;
  Tensor<T> out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = xv.at(i, c0 + j);
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, m, w, c0]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gx = t->grad(xi);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) gx.at(i, c0 + j) += g->at(i, j);
  });
  return o;
}

// Column j of a rank-2 tensor as a rank-1 vector.
template <typename T>
Var<T> col(Var<T> x, int j) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  if (xv.rank() != 2 || j < 0 || j >= xv.cols())
    throw std::invalid_argument("col: column " + std::to_string(j) + " outside " +
                                shape_str(xv.shape()));
  const int m = xv.rows();
  Tensor<T> out({m});
  for (int i = 0; i < m; ++i) out[i] = xv.at(i, j);
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, m, j]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gx = t->grad(xi);
    for (int i = 0; i < m; ++i) gx.at(i, j) += (*g)[i];
  });
  return o;
}

// Rank-1 vectors of equal length become the columns of a rank-2 result.
template <typename T>
Var<T> stack_cols(const std::vector<Var<T>>& cols) {
  if (cols.empty()) throw std::invalid_argument("stack_cols: no columns");
  Tape<T>* t = cols[0].tape;
  const int m = static_cast<int>(t->value(cols[0]).size());
  const int k = static_cast<int>(cols.size());
  Tensor<T> out({m, k});
  std::vector<int> ids(cols.size());
  for (int j = 0; j < k; ++j) {
    detail::same_tape(cols[0], cols[j], "stack_cols");
    const Tensor<T>& cv = t->value(cols[j]);
    if (cv.size() != m)
      throw std::invalid_argument("stack_cols: column length mismatch");
    for (int i = 0; i < m; ++i) out.at(i, j) = cv[i];
    ids[j] = cols[j].id;
  }
  Var<T> o = t->emit(std::move(out));
  t->record([t, ids = std::move(ids), oi = o.id, m]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    for (size_t j = 0; j < ids.size(); ++j) {
      Tensor<T>& gc = t->grad(ids[j]);
      for (int i = 0; i < m; ++i) gc[i] += g->at(i, static_cast<int>(j));
    }
  });
  return o;
}

// ---- reductions -----------------------------------------------------------

template <typename T>
Var<T> rowsum(Var<T> x) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  const int m = xv.rows(), n = xv.cols();
  Tensor<T> out({m});
  for (int i = 0; i < m; ++i) {
    T s = T(0);
    for (int j = 0; j < n; ++j) s += xv.at(i, j);
    out[i] = s;
  }
  Var<T> o = t->emit(std::move(out));
  t->record([t, xi = x.id, oi = o.id, m, n]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gx = t->grad(xi);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx.at(i, j) += (*g)[i];
  });
  return o;
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>* t = x.tape;
  const Tensor<T>& xv = t->value(x);
  T s = T(0);
  for (std::int64_t i = 0; i < xv.size(); ++i) s += xv[i];
  Var<T> o = t->emit(Tensor<T>({1}, {s}));
  t->record([t, xi = x.id, oi = o.id]() {
    Tensor<T>* g = t->maybe_grad(oi);
    if (!g) return;
    Tensor<T>& gx = t->grad(xi);
    const T gv = (*g)[0];
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += gv;
  });
  return o;
}

}  // namespace lexnmt
