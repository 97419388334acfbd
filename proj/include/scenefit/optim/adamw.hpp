#pragma once

// AdamW with bias-corrected moments and decoupled weight decay
// (x <- x - lr*wd*x before the Adam update).

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "scenefit/diff/gradient.hpp"
#include "scenefit/errors.hpp"

namespace scenefit::optim {

struct AdamwConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int steps = 4000;
  void validate() const {
    if (!(lr > 0.0)) throw InvalidInput("AdamW lr must be positive");
    if (!(eps > 0.0)) throw InvalidInput("AdamW eps must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      throw InvalidInput("AdamW betas must lie in (0, 1)");
    if (steps < 1) throw InvalidInput("AdamW steps must be positive");
  }
};

struct AdamwResult {
  std::vector<double> x;       // last iterate
  std::vector<double> best_x;  // iterate with the lowest evaluated loss
  double best_value = 0.0;
  int best_step = 0;
  std::vector<double> trace;   // loss evaluated before each update
};

/// Per-step callback: (step, x before update, loss). Returning false stops early.
using AdamwObserver = std::function<bool(int, std::span<const double>, double)>;

class AdamW {
 public:
  AdamW(std::size_t n, const AdamwConfig& cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    cfg_.validate();
  }

  void step(std::span<double> x, std::span<const double> g) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] -= cfg_.lr * cfg_.weight_decay * x[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }

  int iterations() const { return t_; }

 private:
  AdamwConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

/// Runs exactly cfg.steps updates (unless the observer stops early). The loss
/// after the final update is evaluated too so best-iterate selection sees it.
inline AdamwResult adamw_minimize(const diff::Objective& objective, std::span<const double> x0,
                                  const AdamwConfig& cfg, const AdamwObserver& observer = {}) {
  cfg.validate();
  AdamwResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g(res.x.size(), 0.0);
  AdamW opt(res.x.size(), cfg);
  auto record = [&](int step, double f) {
    if (!std::isfinite(f)) throw NonFiniteLoss("adamw", step);
    res.trace.push_back(f);
    if (res.best_x.empty() || f < res.best_value) {
      res.best_value = f;
      res.best_x = res.x;
      res.best_step = step;
    }
  };
  for (int k = 0; k < cfg.steps; ++k) {
    const double f = objective(res.x, g);
    record(k, f);
    if (observer && !observer(k, res.x, f)) return res;
    opt.step(res.x, g);
  }
  record(cfg.steps, objective(res.x, g));
  return res;
}

}  // namespace scenefit::optim
