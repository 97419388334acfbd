#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scenefit/ellipsoid/ellipsoid.hpp"

using namespace scenefit;
using namespace scenefit::ellipsoid;

namespace {

const Vec3d kCenter{0.1, -0.05, 0.8};
const Vec3d kScale{0.0025, 0.0025, 0.0009};

Vec3d unit_direction(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return normalized(Vec3d{n(rng), n(rng), n(rng)});
}

/// Points on {E = 1}: center + sqrt(s) * unit direction.
PointCloud surface_cloud(int n, std::uint32_t seed, double noise = 0.0, double outlier_fraction = 0.0,
                         bool front_only = false) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise > 0 ? noise : 1.0);
  const Vec3d axes{std::sqrt(kScale.x), std::sqrt(kScale.y), std::sqrt(kScale.z)};
  PointCloud c;
  while (static_cast<int>(c.size()) < n) {
    const Vec3d u = unit_direction(rng);
    // Camera at the origin looking down +z sees the surface patch with u.z < 0.
    if (front_only && u.z >= 0) continue;
    Vec3d p = kCenter + hadamard(axes, u);
    if (noise > 0) p = p + Vec3d{jitter(rng), jitter(rng), jitter(rng)};
    c.points.push_back(p);
  }
  // Outliers uniform in the box of twice the semi-axes around the center.
  const int outliers = static_cast<int>(std::lround(outlier_fraction * n));
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  for (int i = 0; i < outliers; ++i) c.points.push_back(kCenter + hadamard(axes, Vec3d{box(rng), box(rng), box(rng)}));
  return c;
}

}  // namespace

TEST(Residual, Examples) {
  EXPECT_EQ(ellipsoid_residual({1, 0, 0}, {{0, 0, 0}, {1, 1, 1}}), 1.0);
  EXPECT_EQ(ellipsoid_residual({0.3, 0.2, 0.1}, {{0.3, 0.2, 0.1}, {1, 2, 3}}), 0.0);
  EXPECT_EQ(ellipsoid_residual({2, 0, 0}, {{0, 0, 0}, {4, 1, 1}}), 1.0);
}

TEST(Priors, LaplaceAtLocation) {
  EXPECT_NEAR(laplace_logpdf(0.4, 0.4, 0.1), -std::log(0.2), 1e-12);
  EXPECT_NEAR(-std::log(0.2), 1.6094, 1e-4);
}

TEST(Priors, LaplaceMatchesClosedFormAwayFromLocation) {
  for (double x : {-0.3, 0.05, 0.7})
    EXPECT_NEAR(laplace_logpdf(x, 0.1, 0.1), -std::log(0.2) - std::fabs(x - 0.1) / 0.1, 1e-5);
}

TEST(Priors, TruncatedNormalOutsideSupportIsClamped) {
  EXPECT_EQ(truncated_normal_logpdf(2.0, 0.1, 0.1, 0.0001, 1.0), kOutsideSupport);
  EXPECT_EQ(truncated_normal_logpdf(0.00001, 0.1, 0.1, 0.0001, 1.0), kOutsideSupport);
  CloudStats st{{0, 0, 1}, {0.02, 0.02, 0.02}};
  PriorConfig cfg;
  EllipsoidParams e{{0, 0, 1}, {2.0, 0.01, 0.01}};
  EXPECT_LE(log_priors(e, st, cfg), kOutsideSupport + 100.0);
}

TEST(Priors, TruncatedNormalIntegratesToOne) {
  const double lo = 0.01, hi = 0.5, mean = 0.05, sd = 0.1;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(truncated_normal_logpdf(lo + (i + 0.5) * h, mean, sd, lo, hi)) * h;
  EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(Priors, TruncatedNormalMeanMatchesQuadrature) {
  const double lo = 0.0001, hi = 1.0, mean = 0.04, sd = 0.1;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double m = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * h;
    m += x * std::exp(truncated_normal_logpdf(x, mean, sd, lo, hi)) * h;
  }
  EXPECT_NEAR(truncated_normal_mean(mean, sd, lo, hi), m, 1e-7);
}

TEST(Priors, LogNormalArgmaxMatchesMode) {
  const double mean = 0.03, sd = 0.1;
  double best = -1e300, arg = 0.0;
  for (double x = 1e-5; x < 0.2; x += 1e-6) {
    const double v = lognormal_logpdf(x, mean, sd);
    if (v > best) {
      best = v;
      arg = x;
    }
  }
  EXPECT_NEAR(arg, lognormal_mode(mean, sd), 2e-6);
}

TEST(Priors, LogNormalHasRequestedMean) {
  const double mean = 0.05, sd = 0.1;
  // Integrate in log space: x = exp(y).
  double m = 0.0;
  const double h = 1e-4;
  for (double y = -30.0; y < 5.0; y += h) {
    const double x = std::exp(y);
    m += x * std::exp(lognormal_logpdf(x, mean, sd)) * x * h;
  }
  EXPECT_NEAR(m, mean, 1e-6);
}

TEST(Likelihood, SurfacePoints) {
  const auto c = surface_cloud(50, 1);
  PriorConfig cfg;
  const double ll = log_likelihood(c, EllipsoidParams{kCenter, kScale}, cfg);
  EXPECT_NEAR(ll, 50 * std::log(5.0), 1e-6);
  EXPECT_NEAR(std::log(5.0), 1.6094, 1e-4);
}

TEST(Likelihood, DoublingScaleLowersDensityAtSurface) {
  const auto c = surface_cloud(40, 2);
  PriorConfig a, b;
  b.likelihood_scale = 2 * a.likelihood_scale;
  const EllipsoidParams e{kCenter, kScale};
  EXPECT_NEAR(log_likelihood(c, e, a) - log_likelihood(c, e, b), 40 * std::log(2.0), 1e-5);
}

TEST(Likelihood, CenterPoint) {
  PointCloud c;
  c.points = {kCenter};
  PriorConfig cfg;
  EXPECT_NEAR(log_likelihood(c, EllipsoidParams{kCenter, kScale}, cfg), -std::log(0.2) - 10.0, 1e-4);
}

TEST(FitMap, NoiseFreeRecoversCenter) {
  const auto fit = fit_map(surface_cloud(500, 3), {});
  EXPECT_FALSE(fit.diverged);
  EXPECT_LE(norm(fit.params.position - kCenter), 1e-3);
}

TEST(FitMap, NoiseAndOutliers) {
  const auto fit = fit_map(surface_cloud(500, 4, 0.002, 0.1), {});
  EXPECT_FALSE(fit.diverged);
  EXPECT_LE(norm(fit.params.position - kCenter), 5e-3);
  for (int j = 0; j < 3; ++j)
    EXPECT_LE(std::fabs(fit.params.scale[j] - kScale[j]) / kScale[j], 0.15) << "axis " << j << ": " << fit.params.scale[j];
}

TEST(FitMap, FrontSurfaceOnlyDepth) {
  const auto fit = fit_map(surface_cloud(400, 5, 0.0, 0.0, true), {});
  EXPECT_FALSE(fit.diverged);
  EXPECT_LE(std::fabs(fit.params.position.z - kCenter.z), 0.02);
}

TEST(FitMap, PosteriorNotWorseThanStart) {
  for (std::uint32_t seed = 10; seed < 15; ++seed) {
    const auto fit = fit_map(surface_cloud(200, seed, 0.003, 0.05), {});
    EXPECT_LE(fit.nlp_final, fit.nlp_initial);
    EXPECT_FALSE(fit.diverged);
  }
}

TEST(FitMap, TranslationEquivariance) {
  const auto c = surface_cloud(300, 6, 0.001);
  const Vec3d shift{0.2, -0.1, 0.3};
  PointCloud moved = c;
  for (auto& p : moved.points) p = p + shift;
  const auto a = fit_map(c, {});
  const auto b = fit_map(moved, {});
  EXPECT_LE(norm(b.params.position - (a.params.position + shift)), 1e-6);
}

TEST(FitMap, OutliersMoveCenterLittle) {
  double clean = 0.0, dirty = 0.0;
  for (std::uint32_t seed = 20; seed < 26; ++seed) {
    clean += norm(fit_map(surface_cloud(400, seed, 0.002), {}).params.position - kCenter);
    dirty += norm(fit_map(surface_cloud(400, seed, 0.002, 0.1), {}).params.position - kCenter);
  }
  EXPECT_LT(dirty, 3.0 * clean);
}

TEST(FitMap, DegenerateStartLeavesTheObjectBasin) {
  const auto c = surface_cloud(500, 30, 0.002);
  const auto good = fit_map(c, {});
  const auto bad = fit_map(c, {}, default_fit_lbfgs(), EllipsoidParams{{0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}});
  EXPECT_LE(norm(good.params.position - kCenter), 5e-3);
  EXPECT_GE(norm(bad.params.position - kCenter), 0.1);
}

TEST(FitMap, TooFewPointsThrows) { EXPECT_THROW(fit_map(surface_cloud(5, 1), {}), InvalidInput); }

TEST(FitMap, InvalidConfigThrows) {
  PriorConfig cfg;
  cfg.d_min = 2.0;
  EXPECT_THROW(fit_map(surface_cloud(50, 1), cfg), InvalidInput);
}
