#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "scenefit/diff/gradient.hpp"
#include "scenefit/diff/math.hpp"
#include "scenefit/diff/param_vector.hpp"
#include "scenefit/diff/vec3.hpp"

using namespace scenefit;
using diff::Var;

namespace {

struct SumSquares {
  template <class T>
  T operator()(std::span<const T> x) const {
    T s(0.0);
    for (const auto& xi : x) s += xi * xi;
    return s;
  }
};

struct Constant {
  template <class T>
  T operator()(std::span<const T>) const {
    return T(3.0);
  }
};

double central_difference(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Derivative of a unary Var primitive at x via a one-leaf tape.
double tape_derivative(const std::function<Var(const Var&)>& f, double x) {
  auto vg = diff::gradient([&](std::span<const Var> v) { return f(v[0]); }, std::vector<double>{x});
  return vg.gradient.values[0];
}

}  // namespace

TEST(Evaluate, ConstantAndQuadratic) {
  std::vector<double> x{1.0, 2.0};
  EXPECT_EQ(diff::evaluate(Constant{}, std::span<const double>(x)), 3.0);
  EXPECT_EQ(diff::evaluate(SumSquares{}, std::span<const double>(x)), 5.0);
}

TEST(Evaluate, NonFiniteThrows) {
  std::vector<double> x{0.0};
  auto f = [](std::span<const double> v) { return 1.0 / v[0]; };
  EXPECT_THROW(diff::evaluate(f, std::span<const double>(x)), NonFiniteLoss);
}

TEST(Gradient, QuadraticAndConstant) {
  std::vector<double> x{1.0, 2.0};
  auto vg = diff::gradient(SumSquares{}, x);
  EXPECT_EQ(vg.value, 5.0);
  EXPECT_EQ(vg.gradient.values, (std::vector<double>{2.0, 4.0}));
  auto cg = diff::gradient(Constant{}, x);
  EXPECT_EQ(cg.value, 3.0);
  EXPECT_EQ(cg.gradient.values, (std::vector<double>{0.0, 0.0}));
}

TEST(Gradient, NonFiniteGradientReportsSegment) {
  diff::ParamLayout layout;
  layout.add("a", 2);
  layout.add("b", 1);
  diff::ParamVector p(layout, {1.0, 1.0, 0.0});
  auto f = [](std::span<const Var> v) { return v[0] + diff::sqrt(v[2]); };
  try {
    diff::gradient(f, p);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.segment(), "b");
    EXPECT_EQ(e.begin(), 2u);
    EXPECT_EQ(e.end(), 3u);
  }
}

TEST(Gradient, Linearity) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto f = [](std::span<const Var> x) { return x[0] * x[0] * x[1] + 3.0 * x[1] * x[2] - x[2]; };
  auto g = [](std::span<const Var> x) { return x[0] * x[1] * x[2] + x[0] * x[0] * x[0]; };
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x{u(rng), u(rng), u(rng)};
    const double a = u(rng), b = u(rng);
    auto combo = [&](std::span<const Var> v) { return a * f(v) + b * g(v); };
    auto gf = diff::gradient(f, x).gradient.values;
    auto gg = diff::gradient(g, x).gradient.values;
    auto gc = diff::gradient(combo, x).gradient.values;
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-12);
  }
}

TEST(Gradient, Deterministic) {
  std::vector<double> x{0.3, -1.2, 2.5};
  auto f = [](std::span<const Var> v) {
    return diff::exp(v[0]) * diff::sin(v[1]) + diff::log(v[2] * v[2]) / (v[0] + 2.0);
  };
  auto a = diff::gradient(f, x);
  auto b = diff::gradient(f, x);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.gradient.values, b.gradient.values);
}

TEST(Gradient, VarMatchesDoubleBitwise) {
  std::vector<double> x{0.7, 1.9};
  auto f = [](auto a, auto b) { return diff::sqrt(a * a + b) / (a - 3.0) * diff::exp(b / 7.0); };
  auto vg = diff::gradient([&](std::span<const Var> v) { return f(v[0], v[1]); }, x);
  EXPECT_EQ(vg.value, f(x[0], x[1]));
}

TEST(Primitives, DerivativesMatchFiniteDifferences) {
  struct Case {
    const char* name;
    std::function<Var(const Var&)> var;
    std::function<double(double)> dbl;
    double x;
  };
  const std::vector<Case> cases{
      {"add", [](const Var& x) { return x + 2.0 * x; }, [](double x) { return x + 2.0 * x; }, 0.4},
      {"mul", [](const Var& x) { return x * x * 3.0; }, [](double x) { return x * x * 3.0; }, 0.4},
      {"div", [](const Var& x) { return 1.5 / (x + 1.0); }, [](double x) { return 1.5 / (x + 1.0); }, 0.4},
      {"pow", [](const Var& x) { return diff::pow(x, 2.7); }, [](double x) { return std::pow(x, 2.7); }, 0.8},
      {"pow_var_exp", [](const Var& x) { return diff::pow(Var(1.3), x); },
       [](double x) { return std::pow(1.3, x); }, 0.8},
      {"pow_nonneg", [](const Var& x) { return diff::pow_nonneg(x, 100.0); },
       [](double x) { return std::pow(x, 100.0); }, 0.98},
      {"exp", [](const Var& x) { return diff::exp(x); }, [](double x) { return std::exp(x); }, 0.3},
      {"log", [](const Var& x) { return diff::log(x); }, [](double x) { return std::log(x); }, 0.3},
      {"smooth_abs", [](const Var& x) { return diff::smooth_abs(x); },
       [](double x) { return diff::smooth_abs(x); }, -0.2},
      {"smooth_max", [](const Var& x) { return diff::smooth_max(x, Var(0.1), 20.0); },
       [](double x) { return diff::smooth_max(x, 0.1, 20.0); }, 0.05},
      {"smooth_min", [](const Var& x) { return diff::smooth_min(x, Var(0.1), 20.0); },
       [](double x) { return diff::smooth_min(x, 0.1, 20.0); }, 0.05},
      {"sigmoid", [](const Var& x) { return diff::sigmoid(x * 4.0); },
       [](double x) { return diff::sigmoid(x * 4.0); }, 0.2},
      {"sqrt", [](const Var& x) { return diff::sqrt(x); }, [](double x) { return std::sqrt(x); }, 0.6},
      {"dot_norm",
       [](const Var& x) {
         const Vec3<Var> v{x, x * 2.0, Var(1.0)};
         return dot(v, v) + norm(v);
       },
       [](double x) {
         const Vec3d v{x, x * 2.0, 1.0};
         return dot(v, v) + norm(v);
       },
       0.4},
      {"matvec",
       [](const Var& x) {
         const Mat3d m = axis_angle({1, 2, 3}, 0.4);
         return matvec(m, Vec3<Var>{x, x * x, Var(2.0)}).y;
       },
       [](double x) {
         const Mat3d m = axis_angle({1, 2, 3}, 0.4);
         return matvec(m, Vec3d{x, x * x, 2.0}).y;
       },
       0.4},
  };
  for (const auto& c : cases) {
    const double ad = tape_derivative(c.var, c.x);
    const double fd = central_difference(c.dbl, c.x);
    EXPECT_NEAR(ad, fd, 1e-6 * std::max(1.0, std::fabs(fd))) << c.name;
  }
}

TEST(Primitives, SmoothAbsIsZeroAtZero) {
  EXPECT_EQ(diff::smooth_abs(0.0), 0.0);
  EXPECT_NEAR(diff::smooth_abs(0.5), 0.5, 1e-6);
  EXPECT_NEAR(diff::smooth_abs(-0.5), 0.5, 1e-6);
}

TEST(Primitives, ReluSubgradientAtKink) {
  EXPECT_EQ(tape_derivative([](const Var& x) { return diff::relu(x); }, 0.0), 0.0);
  EXPECT_EQ(tape_derivative([](const Var& x) { return diff::relu(x); }, 0.5), 1.0);
  EXPECT_EQ(tape_derivative([](const Var& x) { return diff::relu(x); }, -0.5), 0.0);
}

TEST(Primitives, PowNonnegZeroBase) {
  EXPECT_EQ(tape_derivative([](const Var& x) { return diff::pow_nonneg(x, 3.0); }, 0.0), 0.0);
  EXPECT_EQ(diff::pow_nonneg(-1.0, 2.5), 0.0);
}

TEST(Primitives, SigmoidStableAtExtremes) {
  EXPECT_EQ(diff::sigmoid(-800.0), 0.0);
  EXPECT_EQ(diff::sigmoid(800.0), 1.0);
  EXPECT_NEAR(diff::sigmoid(-500.0), 0.0, 1e-200);
}

TEST(FiniteDiffCheck, QuadraticIsExact) {
  std::vector<double> x{0.5, -1.0, 2.0};
  auto g = diff::gradient(SumSquares{}, x).gradient.values;
  auto f = [](std::span<const double> v) { return SumSquares{}(v); };
  std::vector<std::size_t> idx{0, 1, 2};
  for (double e : diff::finite_diff_check(f, g, x, 1e-4, idx)) EXPECT_LE(e, 1e-8);
}

TEST(FiniteDiffCheck, RejectsNonPositiveStep) {
  std::vector<double> x{1.0};
  std::vector<double> g{2.0};
  std::vector<std::size_t> idx{0};
  auto f = [](std::span<const double> v) { return v[0] * v[0]; };
  EXPECT_THROW(diff::finite_diff_check(f, g, x, 0.0, idx), InvalidInput);
}

TEST(FiniteDiffCheck, NonFiniteReportedAsLarge) {
  std::vector<double> x{0.0};
  std::vector<double> g{1.0};
  std::vector<std::size_t> idx{0};
  auto f = [](std::span<const double> v) { return v[0] > 0 ? std::log(v[0]) : std::nan(""); };
  EXPECT_GE(diff::finite_diff_check(f, g, x, 1e-4, idx)[0], 1e299);
}

TEST(ParamVector, PackUnpackRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  diff::NamedValues named{{"light.position", {u(rng), u(rng), u(rng)}},
                          {"light.intensity", {u(rng)}},
                          {"obj0.material", {u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)}}};
  auto p = diff::ParamVector::pack(named);
  auto q = diff::ParamVector::pack(p.unpack());
  ASSERT_EQ(p.size(), q.size());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(p[i]), std::bit_cast<std::uint64_t>(q[i]));
  EXPECT_TRUE(p.layout() == q.layout());
}

TEST(ParamVector, SegmentsAreDisjointAndCover) {
  diff::ParamLayout layout;
  layout.add("a", 3);
  layout.add("b", 0);
  layout.add("c", 4);
  EXPECT_EQ(layout.total(), 7u);
  for (std::size_t i = 0; i < layout.total(); ++i) {
    int owners = 0;
    for (const auto& s : layout.segments()) owners += i >= s.offset && i < s.offset + s.size;
    EXPECT_EQ(owners, 1);
  }
  EXPECT_THROW(layout.add("a", 1), InvalidInput);
  EXPECT_THROW(layout.at("missing"), InvalidInput);
}
