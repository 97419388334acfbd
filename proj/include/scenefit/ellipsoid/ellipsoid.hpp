#pragma once

// Robust MAP fit of an axis-aligned ellipsoid to an object's point cloud.
// The surface is E(c) = sum_j (c_j - p_j)^2 / s_j = 1, so s holds squared
// semi-axes. The fit runs L-BFGS on [p, log s].

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/diff/gradient.hpp"
#include "scenefit/diff/math.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/optim/lbfgs.hpp"

namespace scenefit::ellipsoid {

struct EllipsoidParams {
  Vec3d position;
  Vec3d scale{1.0, 1.0, 1.0};

  void validate() const {
    if (!(scale.x > 0.0 && scale.y > 0.0 && scale.z > 0.0))
      throw InvalidInput("ellipsoid scales must be positive");
  }
  /// Semi-axis lengths sqrt(s).
  Vec3d semi_axes() const { return {std::sqrt(scale.x), std::sqrt(scale.y), std::sqrt(scale.z)}; }
};

struct PriorConfig {
  Vec3d sigma_p{0.1, 0.1, 0.1};
  double sigma_s = 0.1;
  /// Semi-axis bounds in meters; the truncated normal on s uses [d_min^2, d_max^2].
  double d_min = 0.01;
  double d_max = 1.0;
  double likelihood_scale = 0.1;

  void validate() const {
    if (!(sigma_p.x > 0 && sigma_p.y > 0 && sigma_p.z > 0 && sigma_s > 0 && likelihood_scale > 0))
      throw InvalidInput("prior scales must be positive");
    if (!(d_min > 0 && d_min < d_max)) throw InvalidInput("prior bounds must satisfy 0 < d_min < d_max");
  }
};

inline constexpr double kOutsideSupport = -1e10;

template <class T>
T ellipsoid_residual(const Vec3<T>& c, const Vec3<T>& p, const Vec3<T>& s) {
  const Vec3<T> d = c - p;
  return d.x * d.x / s.x + d.y * d.y / s.y + d.z * d.z / s.z;
}

inline double ellipsoid_residual(const Vec3d& c, const EllipsoidParams& e) {
  return ellipsoid_residual<double>(c, e.position, e.scale);
}

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Log-normal (mu, sigma) of the log matching linear mean m and std sd.
inline std::array<double, 2> lognormal_from_moments(double m, double sd) {
  const double var = std::log1p((sd / m) * (sd / m));
  return {std::log(m) - 0.5 * var, std::sqrt(var)};
}

}  // namespace detail

template <class T>
T truncated_normal_logpdf(const T& x, double mean, double sd, double lo, double hi) {
  if (diff::value_of(x) < lo || diff::value_of(x) > hi) return T(kOutsideSupport);
  const double mass = detail::normal_cdf((hi - mean) / sd) - detail::normal_cdf((lo - mean) / sd);
  const T z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd * std::sqrt(2.0 * std::numbers::pi) * mass);
}

/// Log-normal density parameterized by its linear mean and standard deviation.
template <class T>
T lognormal_logpdf(const T& x, double mean, double sd) {
  if (!(diff::value_of(x) > 0.0)) return T(kOutsideSupport);
  const auto [mu, sigma] = detail::lognormal_from_moments(mean, sd);
  const T lx = diff::log(x);
  const T z = (lx - mu) / sigma;
  return -lx - std::log(sigma * std::sqrt(2.0 * std::numbers::pi)) - 0.5 * z * z;
}

/// Mode of lognormal_logpdf(., mean, sd).
inline double lognormal_mode(double mean, double sd) {
  const auto [mu, sigma] = detail::lognormal_from_moments(mean, sd);
  return std::exp(mu - sigma * sigma);
}

/// Mean of N(mean, sd) truncated to [lo, hi].
inline double truncated_normal_mean(double mean, double sd, double lo, double hi) {
  const double a = (lo - mean) / sd, b = (hi - mean) / sd;
  const double phi_a = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  const double phi_b = std::exp(-0.5 * b * b) / std::sqrt(2.0 * std::numbers::pi);
  return mean + sd * (phi_a - phi_b) / (detail::normal_cdf(b) - detail::normal_cdf(a));
}

/// Laplace log-density with smooth |x|.
template <class T>
T laplace_logpdf(const T& x, const T& loc, double b) {
  return -std::log(2.0 * b) - diff::smooth_abs(T(x - loc)) / b;
}

/// Statistic floor so degenerate (flat) clouds still give proper priors.
inline constexpr double kMinStd = 1e-6;

struct PriorMoments {
  double size_x, size_y;  // truncated-normal means before truncation (2 sigma^p)
  double depth;           // log-normal linear mean (sigma^{p,z})
};

inline PriorMoments prior_moments(const CloudStats& stats) {
  return {2.0 * std::max(stats.stddev.x, kMinStd), 2.0 * std::max(stats.stddev.y, kMinStd),
          std::max(stats.stddev.z, kMinStd)};
}

template <class T>
T log_priors(const Vec3<T>& p, const Vec3<T>& s, const CloudStats& stats, const PriorConfig& cfg) {
  const PriorMoments m = prior_moments(stats);
  const double lo = cfg.d_min * cfg.d_min, hi = cfg.d_max * cfg.d_max;
  T lp = truncated_normal_logpdf(s.x, m.size_x, cfg.sigma_s, lo, hi) +
         truncated_normal_logpdf(s.y, m.size_y, cfg.sigma_s, lo, hi) +
         lognormal_logpdf(s.z, m.depth, cfg.sigma_s);
  for (int j = 0; j < 3; ++j) lp += laplace_logpdf(p[j], T(stats.mean[j]), cfg.sigma_p[j]);
  return lp;
}

inline double log_priors(const EllipsoidParams& e, const CloudStats& stats, const PriorConfig& cfg) {
  return log_priors<double>(e.position, e.scale, stats, cfg);
}

template <class T>
T log_likelihood(const PointCloud& cloud, const Vec3<T>& p, const Vec3<T>& s, double b) {
  T ll(0.0);
  const double norm = std::log(2.0 * b);
  for (const auto& c : cloud.points) {
    const T e = ellipsoid_residual(lift<T>(c), p, s);
    ll += -norm - diff::smooth_abs(T(e - 1.0)) / b;
  }
  return ll;
}

inline double log_likelihood(const PointCloud& cloud, const EllipsoidParams& e, const PriorConfig& cfg) {
  return log_likelihood<double>(cloud, e.position, e.scale, cfg.likelihood_scale);
}

/// Negative log-posterior over x = [p, log s].
struct NegLogPosterior {
  const PointCloud* cloud;
  CloudStats stats;
  PriorConfig cfg;

  template <class T>
  T operator()(std::span<const T> x) const {
    const Vec3<T> p{x[0], x[1], x[2]};
    const Vec3<T> s{diff::exp(x[3]), diff::exp(x[4]), diff::exp(x[5])};
    return -(log_likelihood(*cloud, p, s, cfg.likelihood_scale) + log_priors(p, s, stats, cfg));
  }
};

/// Same posterior over x = [log s] with the position held fixed.
struct ScaleOnlyNegLogPosterior {
  NegLogPosterior full;
  Vec3d position;

  template <class T>
  T operator()(std::span<const T> x) const {
    const std::array<T, 6> y{T(position.x), T(position.y), T(position.z), x[0], x[1], x[2]};
    return full(std::span<const T>(y));
  }
};

/// Prior-mean initialization: p = cloud mean, s = prior first moments.
inline EllipsoidParams initial_params(const CloudStats& stats, const PriorConfig& cfg) {
  const PriorMoments m = prior_moments(stats);
  const double lo = cfg.d_min * cfg.d_min, hi = cfg.d_max * cfg.d_max;
  return {stats.mean,
          {truncated_normal_mean(m.size_x, cfg.sigma_s, lo, hi),
           truncated_normal_mean(m.size_y, cfg.sigma_s, lo, hi), m.depth}};
}

struct EllipsoidFit {
  EllipsoidParams params;
  double nlp_initial = 0.0;
  double nlp_final = 0.0;
  bool diverged = false;  // final posterior worse than at initialization; params hold the start
  optim::LbfgsStatus status = optim::LbfgsStatus::MaxIterations;
  int iterations = 0;
};

inline optim::LbfgsConfig default_fit_lbfgs() {
  optim::LbfgsConfig c;
  c.max_iters = 300;
  c.grad_tol = 1e-9;
  c.rel_tol = 1e-12;
  return c;
}

namespace detail {

/// Scales first with the center held at its start, then everything jointly.
/// A joint start from the prior-mean scales can slide into a very large
/// ellipsoid whose surface merely grazes the cloud.
inline optim::LbfgsResult staged_fit(const NegLogPosterior& nlp, const EllipsoidParams& start,
                                     const optim::LbfgsConfig& lcfg) {
  std::vector<double> x0{start.position.x, start.position.y, start.position.z,
                         std::log(start.scale.x), std::log(start.scale.y), std::log(start.scale.z)};
  const ScaleOnlyNegLogPosterior scale_only{nlp, start.position};
  const optim::LbfgsResult rs =
      optim::lbfgs_minimize(diff::ad_objective(scale_only), std::span<const double>(x0).subspan(3), lcfg);
  std::copy(rs.x.begin(), rs.x.end(), x0.begin() + 3);
  return optim::lbfgs_minimize(diff::ad_objective(nlp), x0, lcfg);
}

}  // namespace detail

/// Number of start centers tried along the viewing ray when no start is given.
inline constexpr int kDepthStarts = 3;

/// MAP fit. Without an explicit start, the prior-mean start is repeated with
/// the center pushed 0, 1 and 2 lateral standard deviations further along the
/// viewing ray (a camera sees only the front crust). The best posterior among
/// runs whose semi-axes all stay within d_max wins; the reported initial
/// posterior is that of the unshifted start.
inline EllipsoidFit fit_map(const PointCloud& cloud, const PriorConfig& cfg,
                            const optim::LbfgsConfig& lcfg = default_fit_lbfgs(),
                            std::optional<EllipsoidParams> init = std::nullopt) {
  cfg.validate();
  if (cloud.size() < kMinObjectPoints) throw InvalidInput("ellipsoid fit needs at least 10 points");
  NegLogPosterior nlp{&cloud, cloud_stats(cloud), cfg};
  const EllipsoidParams start = init.value_or(initial_params(nlp.stats, cfg));
  start.validate();
  auto value_at = [&](const EllipsoidParams& e) {
    const std::array<double, 6> x{e.position.x, e.position.y, e.position.z,
                                  std::log(e.scale.x), std::log(e.scale.y), std::log(e.scale.z)};
    return nlp(std::span<const double>(x));
  };

  EllipsoidFit fit;
  fit.nlp_initial = value_at(start);
  std::vector<EllipsoidParams> starts{start};
  if (!init && norm(start.position) > 0.0) {
    const Vec3d ray = normalized(start.position);
    const double lateral = 0.5 * (nlp.stats.stddev.x + nlp.stats.stddev.y);
    for (int j = 1; j < kDepthStarts; ++j) starts.push_back({start.position + ray * (j * lateral), start.scale});
  }
  const double max_log_scale = 2.0 * std::log(cfg.d_max);
  auto bounded = [&](const optim::LbfgsResult& r) {
    return r.x[3] <= max_log_scale && r.x[4] <= max_log_scale && r.x[5] <= max_log_scale;
  };
  optim::LbfgsResult best;
  bool have = false;
  for (const auto& s0 : starts) {
    optim::LbfgsResult r = detail::staged_fit(nlp, s0, lcfg);
    const bool better = !have || (bounded(r) && !bounded(best)) ||
                        (bounded(r) == bounded(best) && r.value < best.value);
    if (better) {
      best = std::move(r);
      have = true;
    }
  }
  fit.status = best.status;
  fit.iterations = best.iterations;
  fit.nlp_final = best.value;
  fit.params = {{best.x[0], best.x[1], best.x[2]}, {std::exp(best.x[3]), std::exp(best.x[4]), std::exp(best.x[5])}};
  fit.diverged = !(fit.nlp_final <= fit.nlp_initial) || !std::isfinite(fit.nlp_final);
  if (fit.diverged) fit.params = start;
  return fit;
}

}  // namespace scenefit::ellipsoid
