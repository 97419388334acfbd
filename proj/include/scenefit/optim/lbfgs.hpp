#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// cubic interpolation). On line-search failure the solver retries once along
// the steepest-descent direction with Armijo backtracking before giving up.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "scenefit/diff/gradient.hpp"
#include "scenefit/errors.hpp"

namespace scenefit::optim {

struct WolfeParams {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_bracket_steps = 20;
  int max_zoom_steps = 30;
};

struct LbfgsConfig {
  /// History pairs; 0 means unlimited.
  int memory = 10;
  int max_iters = 200;
  double grad_tol = 1e-8;
  /// Stop when |f_k - f_{k+1}| <= rel_tol * |f_k|; 0 disables.
  double rel_tol = 0.0;
  /// Stop when f improved by at most plateau_tol * |f| over the last
  /// plateau_window accepted steps; 0 disables.
  int plateau_window = 0;
  double plateau_tol = 1e-4;
  WolfeParams line_search;

  void validate() const {
    if (memory < 0) throw InvalidInput("L-BFGS memory must be >= 1 (or 0 for unlimited)");
    if (max_iters < 1) throw InvalidInput("L-BFGS max_iters must be positive");
    if (plateau_window < 0 || plateau_tol < 0) throw InvalidInput("L-BFGS plateau settings must be non-negative");
    if (!(0.0 < line_search.c1 && line_search.c1 < line_search.c2 && line_search.c2 < 1.0))
      throw InvalidInput("Wolfe constants must satisfy 0 < c1 < c2 < 1");
  }
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed, Stalled };

/// Data of one accepted step, enough to re-check the Wolfe conditions.
struct LineStep {
  double alpha = 0.0;
  double f0 = 0.0, slope0 = 0.0;  // f and directional derivative at alpha = 0
  double f1 = 0.0, slope1 = 0.0;  // same at the accepted alpha
  bool steepest_descent_fallback = false;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<double> trace;  // objective at x0 and after every accepted step
  std::vector<LineStep> steps;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  int iterations = 0;
  int evaluations = 0;
  double grad_norm = 0.0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb), clipped
/// into the interior of [a, b].
inline double cubic_min(double a, double fa, double ga, double b, double fb, double gb) {
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (gb + d2 - d1) / denom;
  }
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
  return t;
}

struct Probe {
  double alpha, f, slope;
  std::vector<double> x, g;
};

class LineSearch {
 public:
  LineSearch(const diff::Objective& obj, const WolfeParams& p, int& evals)
      : obj_(obj), p_(p), evals_(evals) {}

  Probe probe(std::span<const double> x0, std::span<const double> dir, double alpha) {
    Probe pr{alpha, 0.0, 0.0, std::vector<double>(x0.size()), std::vector<double>(x0.size())};
    for (std::size_t i = 0; i < x0.size(); ++i) pr.x[i] = x0[i] + alpha * dir[i];
    pr.f = obj_(pr.x, pr.g);
    ++evals_;
    pr.slope = std::isfinite(pr.f) ? dot(pr.g, dir) : std::numeric_limits<double>::quiet_NaN();
    return pr;
  }

  /// Strong Wolfe search (Nocedal & Wright, Alg. 3.5/3.6). Returns false on failure.
  bool strong_wolfe(std::span<const double> x0, double f0, double slope0,
                    std::span<const double> dir, double alpha1, Probe& out) {
    Probe prev{0.0, f0, slope0, {}, {}};
    double alpha = alpha1;
    for (int i = 0; i < p_.max_bracket_steps; ++i) {
      Probe cur = probe(x0, dir, alpha);
      if (!std::isfinite(cur.f) || cur.f > f0 + p_.c1 * alpha * slope0 ||
          (i > 0 && cur.f >= prev.f)) {
        if (!std::isfinite(cur.f)) {
          // Shrink toward the last good point until the objective is finite.
          alpha = 0.5 * (prev.alpha + alpha);
          continue;
        }
        return zoom(x0, f0, slope0, dir, prev, cur, out);
      }
      if (std::fabs(cur.slope) <= -p_.c2 * slope0) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(x0, f0, slope0, dir, cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return false;
  }

  /// Armijo backtracking along `dir`.
  bool backtrack(std::span<const double> x0, double f0, double slope0,
                 std::span<const double> dir, double alpha, Probe& out) {
    for (int i = 0; i < 60; ++i) {
      Probe cur = probe(x0, dir, alpha);
      if (std::isfinite(cur.f) && cur.f <= f0 + p_.c1 * alpha * slope0 && cur.f < f0) {
        out = std::move(cur);
        return true;
      }
      alpha *= 0.5;
    }
    return false;
  }

 private:
  bool zoom(std::span<const double> x0, double f0, double slope0, std::span<const double> dir,
            Probe lo, Probe hi, Probe& out) {
    for (int j = 0; j < p_.max_zoom_steps; ++j) {
      const double alpha = std::isfinite(hi.f) && std::isfinite(hi.slope)
                               ? cubic_min(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope)
                               : 0.5 * (lo.alpha + hi.alpha);
      if (std::fabs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::fabs(lo.alpha))) break;
      Probe cur = probe(x0, dir, alpha);
      if (!std::isfinite(cur.f) || cur.f > f0 + p_.c1 * alpha * slope0 || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::fabs(cur.slope) <= -p_.c2 * slope0) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = std::move(lo);
        lo = std::move(cur);
      }
    }
    // Accept a sufficient-decrease point if zoom ran out of budget.
    if (lo.alpha > 0.0 && lo.f < f0) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const diff::Objective& obj_;
  const WolfeParams& p_;
  int& evals_;
};

}  // namespace detail

/// Minimizes `objective` from x0.
/// Called after every accepted step with (iteration, x, f).
using LbfgsObserver = std::function<void(int, std::span<const double>, double)>;

/// Minimizes `objective` from x0. The first step has unit length along -g, so
/// scaling the objective by a constant leaves the iterates unchanged.
inline LbfgsResult lbfgs_minimize(const diff::Objective& objective, std::span<const double> x0,
                                  const LbfgsConfig& cfg, const LbfgsObserver& observer = {}) {
  cfg.validate();
  const std::size_t n = x0.size();
  LbfgsResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g(n, 0.0);
  double f = objective(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(f)) throw NonFiniteLoss("lbfgs initial point");
  res.trace.push_back(f);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> dir(n), q(n), alpha_buf;
  detail::LineSearch ls(objective, cfg.line_search, res.evaluations);

  auto gnorm = [&] { return std::sqrt(detail::dot(g, g)); };
  res.grad_norm = gnorm();
  if (n == 0 || res.grad_norm <= cfg.grad_tol) {
    res.status = LbfgsStatus::Converged;
    res.value = f;
    return res;
  }

  for (int it = 0; it < cfg.max_iters; ++it) {
    // Two-loop recursion.
    q = g;
    const std::size_t m = s_hist.size();
    alpha_buf.assign(m, 0.0);
    for (std::size_t i = m; i-- > 0;) {
      alpha_buf[i] = rho_hist[i] * detail::dot(s_hist[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] -= alpha_buf[i] * y_hist[i][j];
    }
    double gamma = 1.0;
    if (m > 0) gamma = detail::dot(s_hist.back(), y_hist.back()) / detail::dot(y_hist.back(), y_hist.back());
    for (std::size_t j = 0; j < n; ++j) q[j] *= gamma;
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * detail::dot(y_hist[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] += s_hist[i][j] * (alpha_buf[i] - beta);
    }
    for (std::size_t j = 0; j < n; ++j) dir[j] = -q[j];

    double slope = detail::dot(g, dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: reset the history and use steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j];
      slope = detail::dot(g, dir);
    }
    const double alpha0 = m == 0 ? 1.0 / std::max(res.grad_norm, 1e-300) : 1.0;

    detail::Probe accepted;
    bool ok = ls.strong_wolfe(res.x, f, slope, dir, alpha0, accepted);
    bool fallback = false;
    if (!ok) {
      for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j];
      slope = detail::dot(g, dir);
      ok = ls.backtrack(res.x, f, slope, dir, 1.0 / std::max(res.grad_norm, 1e-300), accepted);
      fallback = true;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    if (!ok) {
      res.status = LbfgsStatus::LineSearchFailed;
      break;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = accepted.x[j] - res.x[j];
      y[j] = accepted.g[j] - g[j];
    }
    res.steps.push_back({accepted.alpha, f, slope, accepted.f, accepted.slope, fallback});
    const double f_prev = f;
    res.x = std::move(accepted.x);
    g = std::move(accepted.g);
    f = accepted.f;
    res.trace.push_back(f);
    res.iterations = it + 1;
    if (observer) observer(res.iterations, res.x, f);

    const double sy = detail::dot(s, y);
    if (sy > 1e-12 * std::sqrt(detail::dot(s, s) * detail::dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (cfg.memory > 0 && static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    res.grad_norm = gnorm();
    if (res.grad_norm <= cfg.grad_tol) {
      res.status = LbfgsStatus::Converged;
      break;
    }
    if (cfg.rel_tol > 0.0 && std::fabs(f_prev - f) <= cfg.rel_tol * std::fabs(f_prev)) {
      res.status = LbfgsStatus::Stalled;
      break;
    }
    if (cfg.plateau_window > 0 && res.iterations >= cfg.plateau_window) {
      const double f_old = res.trace[res.trace.size() - 1 - static_cast<std::size_t>(cfg.plateau_window)];
      if (f_old - f <= cfg.plateau_tol * std::fabs(f_old)) {
        res.status = LbfgsStatus::Stalled;
        break;
      }
    }
    res.status = LbfgsStatus::MaxIterations;
  }
  res.value = f;
  return res;
}

}  // namespace scenefit::optim
