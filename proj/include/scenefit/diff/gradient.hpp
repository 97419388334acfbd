#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "scenefit/diff/param_vector.hpp"
#include "scenefit/diff/tape.hpp"
#include "scenefit/errors.hpp"

namespace scenefit::diff {

/// Value-and-gradient callback used by the optimizers: returns f(x) and
/// writes df/dx into `grad` (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// Value-only callback, used for finite differences and line-search probes.
using ValueFunction = std::function<double(std::span<const double> x)>;

struct ValueAndGradient {
  double value = 0.0;
  Gradient gradient;
};

namespace detail {

inline void check_finite_gradient(std::span<const double> g, const ParamLayout* layout) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::isfinite(g[i])) continue;
    if (layout != nullptr && layout->total() == g.size()) {
      const Segment& s = layout->segment_of(i);
      throw NonFiniteGradient(s.name, s.offset, s.offset + s.size);
    }
    throw NonFiniteGradient("params", i, i + 1);
  }
}

}  // namespace detail

/// Evaluates a generic objective `f(std::span<const T>) -> T` at doubles.
template <class F>
double evaluate(F&& f, std::span<const double> x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw NonFiniteLoss("objective");
  return v;
}

template <class F>
double evaluate(F&& f, const ParamVector& params) {
  return evaluate(std::forward<F>(f), params.values());
}

/// Reverse-mode gradient of a generic objective on a private tape.
template <class F>
ValueAndGradient gradient(F&& f, std::span<const double> x, const ParamLayout* layout = nullptr) {
  thread_local Tape tape;
  tape.clear();
  TapeScope scope(tape);
  std::vector<Var> leaves;
  leaves.reserve(x.size());
  for (double xi : x) leaves.push_back(Var::leaf(xi));
  const Var out = f(std::span<const Var>(leaves));

  ValueAndGradient result;
  result.value = out.value();
  if (!std::isfinite(result.value)) throw NonFiniteLoss("objective");
  result.gradient.values.assign(x.size(), 0.0);
  if (!out.is_constant()) {
    std::vector<double> adjoint(tape.size(), 0.0);
    adjoint[static_cast<std::size_t>(out.index())] = 1.0;
    tape.propagate(adjoint);
    for (std::size_t i = 0; i < x.size(); ++i)
      result.gradient.values[i] = adjoint[static_cast<std::size_t>(leaves[i].index())];
  }
  detail::check_finite_gradient(result.gradient.values, layout);
  return result;
}

template <class F>
ValueAndGradient gradient(F&& f, const ParamVector& params) {
  return gradient(std::forward<F>(f), params.values(), &params.layout());
}

/// Wraps a generic templated objective into an optimizer callback. Non-finite
/// values or gradients come back as +inf so line searches can step back; the
/// optimizers raise NonFiniteLoss themselves when they cannot recover.
template <class F>
Objective ad_objective(F f) {
  return [f](std::span<const double> x, std::span<double> grad) {
    try {
      ValueAndGradient vg = gradient(f, x);
      std::copy(vg.gradient.values.begin(), vg.gradient.values.end(), grad.begin());
      return vg.value;
    } catch (const NonFiniteLoss&) {
    } catch (const NonFiniteGradient&) {
    }
    std::fill(grad.begin(), grad.end(), std::numeric_limits<double>::quiet_NaN());
    return std::numeric_limits<double>::infinity();
  };
}

/// Relative error |g_i - fd_i| / max(|g_i|, 1e-8) per requested index, where
/// fd_i is the central difference with the given step.
inline std::vector<double> finite_diff_check(const ValueFunction& f, std::span<const double> grad,
                                             std::span<const double> x, double step,
                                             std::span<const std::size_t> indices) {
  if (!(step > 0.0)) throw InvalidInput("finite-difference step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> errors;
  errors.reserve(indices.size());
  for (std::size_t i : indices) {
    const double xi = probe[i];
    probe[i] = xi + step;
    const double fp = f(probe);
    probe[i] = xi - step;
    const double fm = f(probe);
    probe[i] = xi;
    const double fd = (fp - fm) / (2.0 * step);
    const double err = std::fabs(grad[i] - fd) / std::max(std::fabs(grad[i]), 1e-8);
    errors.push_back(std::isfinite(err) ? err : 1e300);
  }
  return errors;
}

}  // namespace scenefit::diff
