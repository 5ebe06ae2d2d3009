#pragma once
// Training optimizers over flat weight vectors: Adam with an exponentially
// decaying learning rate, and a limited-memory quasi-Newton loop (history 20)
// with a strong-Wolfe line search. Both are deterministic given their inputs.

#include "navem/common.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace navem {

// lr(0) = 1e-2 decaying exponentially to lr(total) = 1e-3.
inline double lr_schedule(int epoch, int total_epochs) {
  return 1e-2 * std::pow(0.1, static_cast<double>(epoch) / total_epochs);
}

struct AdamState {
  VecX m, v;
  long step = 0;
};

inline void adam_step(AdamState& state, VecX& weights, const VecX& grad,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  require_finite(grad, "adam gradient");
  if (state.step == 0) {
    state.m = VecX::Zero(weights.size());
    state.v = VecX::Zero(weights.size());
  }
  if (state.m.size() != weights.size() || grad.size() != weights.size())
    throw DimMismatch("adam state does not match the weight vector");
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  weights -= (lr / bc1) * state.m.cwiseQuotient(
                 ((state.v / bc2).cwiseSqrt().array() + eps).matrix());
  require_finite(weights, "adam weights");
}

// Loss callback: fills `grad` and returns the loss at `w`.
using LossFn = std::function<double(const VecX& w, VecX& grad)>;

struct QuasiNewtonResult {
  int iterations = 0;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  bool converged = false;          // grad-norm tolerance reached
  bool line_search_failed = false;
  std::vector<double> loss_history;  // loss after each accepted step
};

namespace detail {

struct WolfeResult {
  double alpha = 0.0, f = 0.0;
  VecX grad;
  bool ok = false;
};

// Strong-Wolfe line search (c1 = 1e-4, c2 = 0.9), bracket + bisection zoom.
// Non-finite trial values are treated as "too far" so the zoom backs off.
inline WolfeResult wolfe_search(const LossFn& fn, const VecX& w,
                                const VecX& dir, double f0, double g0d) {
  constexpr double c1 = 1e-4, c2 = 0.9;
  WolfeResult res;
  VecX grad(w.size());
  const auto eval = [&](double alpha, double& f, double& gd) {
    f = fn(w + alpha * dir, grad);
    gd = grad.allFinite() ? grad.dot(dir)
                          : std::numeric_limits<double>::quiet_NaN();
  };
  const auto armijo = [&](double alpha, double f) {
    return std::isfinite(f) && f <= f0 + c1 * alpha * g0d;
  };

  double lo = 0.0, f_lo = f0, g_lo = g0d;
  double hi = -1.0, f_hi = 0.0;  // hi < 0 means "not bracketed yet"
  double alpha = 1.0, alpha_prev = 0.0, f_prev = f0;
  for (int i = 0; i < 25 && hi < 0.0; ++i) {
    double f, gd;
    eval(alpha, f, gd);
    if (!armijo(alpha, f) || (i > 0 && f >= f_prev)) {
      lo = alpha_prev; f_lo = f_prev;
      hi = alpha; f_hi = f;
      break;
    }
    if (std::abs(gd) <= -c2 * g0d) {
      res.alpha = alpha; res.f = f; res.grad = grad; res.ok = true;
      return res;
    }
    if (gd >= 0.0) {
      lo = alpha; f_lo = f; g_lo = gd;
      hi = alpha_prev; f_hi = f_prev;
      break;
    }
    alpha_prev = alpha; f_prev = f; g_lo = gd;
    alpha *= 2.0;
  }
  if (hi < 0.0) return res;  // never bracketed

  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    double f, gd;
    eval(mid, f, gd);
    if (!armijo(mid, f) || f >= f_lo) {
      hi = mid; f_hi = f;
    } else {
      if (std::abs(gd) <= -c2 * g0d) {
        res.alpha = mid; res.f = f; res.grad = grad; res.ok = true;
        return res;
      }
      if (gd * (hi - lo) >= 0.0) { hi = lo; f_hi = f_lo; }
      lo = mid; f_lo = f; g_lo = gd;
    }
    if (std::abs(hi - lo) < 1e-16 * (1.0 + std::abs(lo))) break;
  }
  (void)f_hi; (void)g_lo;
  return res;
}

}  // namespace detail

// Limited-memory quasi-Newton minimization (history 20). Every accepted step
// satisfies the strong Wolfe conditions, so the loss sequence is strictly
// decreasing; stops on the gradient-norm tolerance, on line-search failure,
// or after max_epochs iterations. `on_epoch`, when set, is invoked after each
// accepted step with the zero-based iteration index and the new loss.
inline QuasiNewtonResult quasi_newton_run(
    VecX& weights, const LossFn& fn, int max_epochs = 10000,
    double grad_tol = 1e-10, int history_size = 20,
    const std::function<void(int, double)>& on_epoch = {}) {
  QuasiNewtonResult res;
  VecX grad(weights.size());
  double f = fn(weights, grad);
  if (!std::isfinite(f)) throw NonFinite("quasi-newton initial loss");
  require_finite(grad, "quasi-newton initial gradient");

  std::deque<std::pair<VecX, VecX>> pairs;  // (s, y)
  for (int iter = 0; iter < max_epochs; ++iter) {
    res.grad_norm = grad.norm();
    if (res.grad_norm <= grad_tol) { res.converged = true; break; }

    // two-loop recursion
    VecX dir = -grad;
    std::vector<double> alpha_mem(pairs.size());
    for (int k = static_cast<int>(pairs.size()) - 1; k >= 0; --k) {
      const auto& [s, y] = pairs[k];
      const double rho = 1.0 / y.dot(s);
      alpha_mem[k] = rho * s.dot(dir);
      dir -= alpha_mem[k] * y;
    }
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      dir *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto& [s, y] = pairs[k];
      const double rho = 1.0 / y.dot(s);
      dir += (alpha_mem[k] - rho * y.dot(dir)) * s;
    }

    double g0d = grad.dot(dir);
    if (g0d >= 0.0) {  // memory turned sour; steepest descent restart
      pairs.clear();
      dir = -grad;
      g0d = grad.dot(dir);
    }
    detail::WolfeResult ls = detail::wolfe_search(fn, weights, dir, f, g0d);
    if (!ls.ok) { res.line_search_failed = true; break; }

    const VecX s = ls.alpha * dir;
    const VecX y = ls.grad - grad;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      pairs.emplace_back(s, y);
      if (static_cast<int>(pairs.size()) > history_size) pairs.pop_front();
    }
    weights += s;
    f = ls.f;
    grad = ls.grad;
    require_finite(grad, "quasi-newton gradient");
    res.loss_history.push_back(f);
    if (on_epoch) on_epoch(iter, f);
    ++res.iterations;
  }
  res.final_loss = f;
  res.grad_norm = grad.norm();
  return res;
}

}  // namespace navem
