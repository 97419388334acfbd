#pragma once

// Differentiable primitives, overloaded for `double` and `Var` so that the
// renderer and the losses are written once as templates.

#include <algorithm>
#include <cmath>

#include "scenefit/diff/tape.hpp"

namespace scenefit::diff {

/// Offset of the smooth absolute value; |x| is replaced by sqrt(x^2 + eps^2) - eps.
inline constexpr double kSmoothAbsEps = 1e-6;

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

inline double sqrt(double x) { return std::sqrt(x); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double pow(double x, double p) { return std::pow(x, p); }
inline double abs(double x) { return std::fabs(x); }

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return Var::unary(s, x, 0.5 / s);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return Var::unary(e, x, e);
}
inline Var log(const Var& x) { return Var::unary(std::log(x.value()), x, 1.0 / x.value()); }
inline Var sin(const Var& x) { return Var::unary(std::sin(x.value()), x, std::cos(x.value())); }
inline Var cos(const Var& x) { return Var::unary(std::cos(x.value()), x, -std::sin(x.value())); }
inline Var pow(const Var& x, double p) {
  const double v = std::pow(x.value(), p);
  return Var::unary(v, x, p * std::pow(x.value(), p - 1.0));
}
/// x^p for x > 0. Both base and exponent may carry derivatives.
inline Var pow(const Var& x, const Var& p) {
  const double v = std::pow(x.value(), p.value());
  return Var::binary(v, x, p.value() * std::pow(x.value(), p.value() - 1.0), p,
                     v * std::log(x.value()));
}
inline Var pow(double x, const Var& p) { return pow(Var(x), p); }
/// Subgradient sign(x), 0 at 0.
inline Var abs(const Var& x) {
  const double v = x.value();
  return Var::unary(std::fabs(v), x, v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}

inline double smooth_abs(double x) {
  return std::sqrt(x * x + kSmoothAbsEps * kSmoothAbsEps) - kSmoothAbsEps;
}
inline double smooth_abs_derivative(double x) {
  return x / std::sqrt(x * x + kSmoothAbsEps * kSmoothAbsEps);
}
inline Var smooth_abs(const Var& x) {
  return Var::unary(smooth_abs(x.value()), x, smooth_abs_derivative(x.value()));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline Var sigmoid(const Var& x) {
  const double s = sigmoid(x.value());
  return Var::unary(s, x, s * (1.0 - s));
}

/// max(0, x) with subgradient 0 at the kink.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Var relu(const Var& x) {
  return x.value() > 0.0 ? x : Var(0.0);
}

/// x^p for x >= 0 that is exactly zero (with zero derivative) at x == 0.
template <class T, class P>
T pow_nonneg(const T& x, const P& p) {
  if (value_of(x) <= 0.0) return T(0.0);
  return pow(x, p);
}

template <class T>
T min(const T& a, const T& b) {
  return value_of(b) < value_of(a) ? b : a;
}
template <class T>
T max(const T& a, const T& b) {
  return value_of(b) > value_of(a) ? b : a;
}
template <class T>
T clamp(const T& x, double lo, double hi) {
  if (value_of(x) < lo) return T(lo);
  if (value_of(x) > hi) return T(hi);
  return x;
}

/// Log-sum-exp relaxation of max(a, b); sharpness k > 0.
template <class T>
T smooth_max(const T& a, const T& b, double k) {
  const double m = std::max(value_of(a), value_of(b));
  return m + log(exp((a - m) * k) + exp((b - m) * k)) / k;
}
template <class T>
T smooth_min(const T& a, const T& b, double k) {
  return -smooth_max(T(-a), T(-b), k);
}

}  // namespace scenefit::diff
