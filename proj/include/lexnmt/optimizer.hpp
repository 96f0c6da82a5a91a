// Uniform init, gradient-norm clipping, and the Adadelta update rule.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexnmt/rng.hpp"
#include "lexnmt/tape.hpp"

namespace lexnmt {

// Matrices uniform in [-range, range]; biases zero unless asked for.
template <typename T>
void init_params(const std::vector<Parameter<T>*>& params, Rng& rng,
                 double range = 0.01, bool init_biases = false) {
  for (auto* p : params) {
    if (p->is_bias && !init_biases) {
      p->value.fill(T(0));
      continue;
    }
    for (std::int64_t i = 0; i < p->value.size(); ++i)
      p->value[i] = static_cast<T>(rng.uniform(-range, range));
  }
}

template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params) {
  double acc = 0;
  for (const auto* p : params)
    for (std::int64_t i = 0; i < p->grad.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      acc += g * g;
    }
  return std::sqrt(acc);
}

// Scales all gradients down to max_norm when the global L2 norm exceeds it.
template <typename T>
double clip_global_norm(const std::vector<Parameter<T>*>& params,
                        double max_norm = 5.0) {
  for (const auto* p : params)
    for (std::int64_t i = 0; i < p->grad.size(); ++i)
      if (!std::isfinite(static_cast<double>(p->grad[i])))
        throw std::runtime_error("non-finite gradient in parameter '" + p->name +
                                 "' at index " + std::to_string(i));
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      for (std::int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
  }
  return norm;
}

// Per-parameter variant of the same rule (the clipping ambiguity knob).
template <typename T>
void clip_per_param_norm(const std::vector<Parameter<T>*>& params,
                         double max_norm = 5.0) {
  for (auto* p : params) {
    double acc = 0;
    for (std::int64_t i = 0; i < p->grad.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in parameter '" + p->name + "'");
      acc += g * g;
    }
    const double norm = std::sqrt(acc);
    if (norm > max_norm) {
      const T s = static_cast<T>(max_norm / norm);
      for (std::int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
  }
}

template <typename T>
struct AdadeltaState {
  double rho = 0.95;
  double eps = 1e-6;
  std::vector<Tensor<T>> sq_grad;    // E[g^2] per parameter
  std::vector<Tensor<T>> sq_delta;   // E[dx^2] per parameter

  static AdadeltaState make(const std::vector<Parameter<T>*>& params,
                            double rho = 0.95, double eps = 1e-6) {
    AdadeltaState st;
    st.rho = rho;
    st.eps = eps;
    for (const auto* p : params) {
      st.sq_grad.emplace_back(p->value.shape());
      st.sq_delta.emplace_back(p->value.shape());
    }
    return st;
  }

  void check(const std::vector<Parameter<T>*>& params) const {
    if (params.size() != sq_grad.size() || params.size() != sq_delta.size())
      throw std::invalid_argument("adadelta state does not match parameter list");
    for (std::size_t k = 0; k < params.size(); ++k)
      if (!params[k]->value.same_shape(sq_grad[k]) ||
          !params[k]->value.same_shape(sq_delta[k]))
        throw std::invalid_argument("adadelta accumulator shape mismatch for '" +
                                    params[k]->name + "'");
  }
};

// E[g^2] <- rho E[g^2] + (1-rho) g^2; dx = -(RMS[dx]/RMS[g]) g; apply; decay dx.
template <typename T>
void adadelta_step(const std::vector<Parameter<T>*>& params,
                   AdadeltaState<T>& st) {
  st.check(params);
  const double rho = st.rho, eps = st.eps;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<T>& p = *params[k];
    Tensor<T>& eg = st.sq_grad[k];
    Tensor<T>& ed = st.sq_delta[k];
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      const double eg_new = rho * static_cast<double>(eg[i]) + (1 - rho) * g * g;
      const double dx = -std::sqrt((static_cast<double>(ed[i]) + eps) /
                                   (eg_new + eps)) * g;
      eg[i] = static_cast<T>(eg_new);
      ed[i] = static_cast<T>(rho * static_cast<double>(ed[i]) + (1 - rho) * dx * dx);
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) + dx);
    }
  }
}

}  // namespace lexnmt
