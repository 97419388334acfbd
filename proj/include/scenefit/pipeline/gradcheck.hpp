#pragma once

// Finite-difference check of the scene loss gradient over every raw scene
// parameter (light, floor, materials, geometry) on random small scenes.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scenefit/pipeline/generator.hpp"
#include "scenefit/pipeline/json_io.hpp"
#include "scenefit/scene_opt/scene_opt.hpp"

namespace scenefit::pipeline {

struct GradCheckConfig {
  int scenes = 20;
  int width = 32, height = 24;
  double step = 1e-4;
  std::uint64_t seed = 1;
  double shading_tol = 1e-3;
  double geometry_tol = 5e-2;
  double geometry_fraction = 0.9;
  /// Every other scene carries a level-1 icosphere mesh instead of a sphere.
  bool include_meshes = true;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GradCheckConfig, scenes, width, height, step, seed, shading_tol,
                                                geometry_tol, geometry_fraction, include_meshes)

struct GradCheckResult {
  int shading_total = 0, shading_pass = 0;
  int geometry_total = 0, geometry_pass = 0;
  double worst_shading_error = 0.0;
  std::string worst_shading_param;

  double geometry_pass_fraction() const {
    return geometry_total == 0 ? 1.0 : static_cast<double>(geometry_pass) / geometry_total;
  }
  bool passed(const GradCheckConfig& c) const {
    return shading_pass == shading_total && geometry_pass_fraction() >= c.geometry_fraction;
  }
};

/// Every raw scalar in render::ParamIndex order, with a name.
inline std::vector<std::pair<std::string, double*>> scene_param_refs(render::SceneModel& s) {
  std::vector<std::pair<std::string, double*>> p;
  auto vec = [&](const std::string& n, Vec3d& v) {
    p.emplace_back(n + ".x", &v.x);
    p.emplace_back(n + ".y", &v.y);
    p.emplace_back(n + ".z", &v.z);
  };
  auto mat = [&](const std::string& n, render::Material& m) {
    p.emplace_back(n + ".ambient", &m.ambient);
    p.emplace_back(n + ".diffuse", &m.diffuse);
    p.emplace_back(n + ".specular", &m.specular);
    p.emplace_back(n + ".shininess", &m.shininess);
    vec(n + ".color", m.color);
  };
  vec("light.position", s.light.position);
  p.emplace_back("light.intensity", &s.light.intensity);
  mat("floor", s.floor.material);
  vec("floor.color_b", s.floor.pattern.color_b);
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const std::string n = "obj" + std::to_string(k);
    mat(n, s.objects[k].material);
    if (s.objects[k].is_sphere()) {
      vec(n + ".center", s.objects[k].sphere().center);
      vec(n + ".radii", s.objects[k].sphere().radii);
    } else {
      auto& vs = s.objects[k].mesh().vertices;
      for (std::size_t i = 0; i < vs.size(); ++i) vec(n + ".v" + std::to_string(i), vs[i]);
    }
  }
  return p;
}

/// Scene loss value and its gradient over all raw parameters.
inline double scene_loss_gradient(const ObservationSet& obs, const render::SceneModel& s,
                                  const scene_opt::SceneOptConfig& cfg, std::vector<double>* grad) {
  const render::RenderOutput out = render::render(s, cfg.render);
  scene_opt::PixelLoss pl = scene_opt::scene_data_loss(obs, out, cfg.weights, grad != nullptr);
  scene_opt::BarrierConfig eff = cfg.barrier;
  eff.weight = scene_opt::effective_barrier_weight(cfg.weights, cfg.barrier);
  if (!grad) return pl.breakdown.data + scene_opt::scene_barrier(s, eff);
  *grad = render::render_backward(s, cfg.render, out, pl.adjoint, {});
  return pl.breakdown.data + scene_opt::scene_barrier(s, eff, *grad);
}

/// Ground truth and a perturbed evaluation point for check scene `i`.
inline std::pair<render::SceneModel, render::SceneModel> gradcheck_scene(const GradCheckConfig& c, int i) {
  std::mt19937_64 rng(c.seed * 1000003ull + static_cast<std::uint64_t>(i));
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  GeneratorConfig g;
  render::SceneModel truth;
  const double f = 1000.0 * c.width / 640.0;
  truth.intrinsics = {f, f, c.width / 2.0, c.height / 2.0, c.width, c.height};
  truth.floor = tabletop_floor(g);
  const double r = u(0.025, 0.045);
  const Vec3d center = view_center(truth.floor) + truth.floor.axis_u() * u(-0.04, 0.04) +
                       truth.floor.axis_v() * u(-0.03, 0.03) + truth.floor.up * r;
  render::SceneObject o;
  o.material = {u(0.1, 0.3), u(0.4, 0.8), u(0.05, 0.8), u(20, 150), {u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)}};
  if (c.include_meshes && i % 2 == 1) {
    TriMesh m = icosphere(1);
    const Vec3d radii{r * u(0.8, 1.2), r * u(0.8, 1.2), r * u(0.8, 1.2)};
    for (auto& v : m.vertices) v = center + hadamard(radii, v);
    o.shape = m;
  } else {
    o.shape = render::Sphere{center, {r, r, r}};
  }
  truth.objects.push_back(o);
  truth.light = {view_center(truth.floor) + truth.floor.up * u(0.4, 0.8) + truth.floor.axis_u() * u(-0.3, 0.3), u(1.0, 1.5)};

  render::SceneModel eval = truth;
  render::SceneObject& e = eval.objects[0];
  e.material = {u(0.1, 0.3), u(0.4, 0.8), u(0.05, 0.8), u(20, 150), {u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)}};
  eval.light.position = eval.light.position + Vec3d{u(-0.05, 0.05), u(-0.05, 0.05), u(-0.05, 0.05)};
  eval.light.intensity *= u(0.8, 1.2);
  eval.floor.material = {u(0.2, 0.4), u(0.4, 0.8), u(0.02, 0.1), u(10, 40), {u(0.5, 0.9), u(0.5, 0.9), u(0.5, 0.9)}};
  eval.floor.pattern.color_b = {u(0.3, 0.6), u(0.3, 0.6), u(0.3, 0.6)};
  const Vec3d shift{u(-0.003, 0.003), u(-0.003, 0.003), u(-0.003, 0.003)};
  if (e.is_sphere()) {
    e.sphere().center = e.sphere().center + shift;
    e.sphere().radii = e.sphere().radii * u(0.95, 1.05);
  } else {
    for (auto& v : e.mesh().vertices) v = v + shift + Vec3d{u(-1e-3, 1e-3), u(-1e-3, 1e-3), u(-1e-3, 1e-3)};
  }
  return {truth, eval};
}

inline GradCheckResult run_gradcheck(const GradCheckConfig& c, const scene_opt::SceneOptConfig& cfg = {}) {
  if (c.scenes < 1 || !(c.step > 0.0)) throw InvalidInput("gradcheck needs scenes >= 1 and a positive step");
  GradCheckResult res;
  for (int i = 0; i < c.scenes; ++i) {
    auto [truth, s] = gradcheck_scene(c, i);
    const ObservationSet obs = observe(truth);
    std::vector<double> g;
    scene_loss_gradient(obs, s, cfg, &g);
    const std::size_t geo = render::ParamIndex(s).geometry(0);
    auto refs = scene_param_refs(s);
    for (std::size_t j = 0; j < refs.size(); ++j) {
      double* x = refs[j].second;
      const double x0 = *x;
      *x = x0 + c.step;
      const double fp = scene_loss_gradient(obs, s, cfg, nullptr);
      *x = x0 - c.step;
      const double fm = scene_loss_gradient(obs, s, cfg, nullptr);
      *x = x0;
      const double fd = (fp - fm) / (2.0 * c.step);
      double err = std::fabs(g[j] - fd) / std::max(std::fabs(g[j]), 1e-8);
      if (!std::isfinite(err)) err = 1e300;
      if (j >= geo) {
        ++res.geometry_total;
        res.geometry_pass += err <= c.geometry_tol;
      } else {
        ++res.shading_total;
        res.shading_pass += err <= c.shading_tol;
        if (err > res.worst_shading_error) {
          res.worst_shading_error = err;
          res.worst_shading_param = "scene " + std::to_string(i) + " " + refs[j].first;
        }
      }
    }
  }
  return res;
}

}  // namespace scenefit::pipeline
