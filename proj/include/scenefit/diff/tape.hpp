#pragma once

// Scalar reverse-mode automatic differentiation on a linear tape.
//
// Every arithmetic operation on a Var appends one node holding the local
// partial derivatives with respect to (at most) two parents. A reverse sweep
// over the node array accumulates adjoints. Operations whose operands are all
// constants produce constants and touch no tape, so templated code can be
// instantiated with `double` or `Var` and give bit-identical values.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace scenefit::diff {

struct TapeNode {
  std::int32_t lhs = -1;
  std::int32_t rhs = -1;
  double dlhs = 0.0;
  double drhs = 0.0;
};

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  std::int32_t push_leaf() { return push({}); }

  std::int32_t push_unary(std::int32_t a, double da) {
    return push({a, -1, da, 0.0});
  }

  std::int32_t push_binary(std::int32_t a, double da, std::int32_t b, double db) {
    return push({a, b, da, db});
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep. `adjoint` must have size() entries with the outputs seeded.
  void propagate(std::span<double> adjoint) const {
    assert(adjoint.size() >= nodes_.size());
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const double a = adjoint[i];
      if (a == 0.0) continue;
      const TapeNode& n = nodes_[i];
      if (n.lhs >= 0) adjoint[static_cast<std::size_t>(n.lhs)] += a * n.dlhs;
      if (n.rhs >= 0) adjoint[static_cast<std::size_t>(n.rhs)] += a * n.drhs;
    }
  }

 private:
  std::int32_t push(const TapeNode& n) {
    nodes_.push_back(n);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::vector<TapeNode> nodes_;
};

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}  // namespace detail

inline Tape& active_tape() {
  if (detail::active_tape == nullptr) {
    throw std::logic_error("scenefit::diff: no active tape on this thread");
  }
  return *detail::active_tape;
}

/// Makes `tape` the recording target for the current thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape) {
    detail::active_tape = &tape;
  }
  ~TapeScope() { detail::active_tape = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

class Var {
 public:
  Var() = default;
  // NOLINTNEXTLINE(google-explicit-constructor): constants mix freely with Vars.
  Var(double value) : value_(value) {}

  /// Registers a new independent variable on the active tape.
  static Var leaf(double value) { return Var(value, active_tape().push_leaf()); }

  double value() const { return value_; }
  std::int32_t index() const { return index_; }
  bool is_constant() const { return index_ < 0; }

  static Var unary(double value, const Var& a, double da) {
    if (a.is_constant()) return Var(value);
    return Var(value, active_tape().push_unary(a.index_, da));
  }

  static Var binary(double value, const Var& a, double da, const Var& b, double db) {
    if (a.is_constant()) return unary(value, b, db);
    if (b.is_constant()) return unary(value, a, da);
    return Var(value, active_tape().push_binary(a.index_, da, b.index_, db));
  }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var operator+(const Var& a, const Var& b) {
    return binary(a.value_ + b.value_, a, 1.0, b, 1.0);
  }
  friend Var operator-(const Var& a, const Var& b) {
    return binary(a.value_ - b.value_, a, 1.0, b, -1.0);
  }
  friend Var operator*(const Var& a, const Var& b) {
    return binary(a.value_ * b.value_, a, b.value_, b, a.value_);
  }
  friend Var operator/(const Var& a, const Var& b) {
    const double inv = 1.0 / b.value_;
    const double q = a.value_ / b.value_;
    return binary(q, a, inv, b, -q * inv);
  }
  friend Var operator-(const Var& a) { return unary(-a.value_, a, -1.0); }

  friend bool operator<(const Var& a, const Var& b) { return a.value_ < b.value_; }
  friend bool operator>(const Var& a, const Var& b) { return a.value_ > b.value_; }
  friend bool operator<=(const Var& a, const Var& b) { return a.value_ <= b.value_; }
  friend bool operator>=(const Var& a, const Var& b) { return a.value_ >= b.value_; }

 private:
  Var(double value, std::int32_t index) : value_(value), index_(index) {}

  double value_ = 0.0;
  std::int32_t index_ = -1;
};

}  // namespace scenefit::diff
