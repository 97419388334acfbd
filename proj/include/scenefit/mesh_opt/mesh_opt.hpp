#pragma once

// Mesh stage: every fitted sphere becomes an icosphere mesh driven by an
// enclosing cage through frozen mean value coordinates; AdamW moves the cage
// vertices against the scene loss plus smoothness, Laplacian and volume
// terms. Light, floor and materials stay fixed.

#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "scenefit/mesh_opt/cage.hpp"
#include "scenefit/mesh_opt/pose.hpp"
#include "scenefit/mesh_opt/regularizers.hpp"
#include "scenefit/optim/adamw.hpp"
#include "scenefit/render/renderer.hpp"
#include "scenefit/scene_opt/scene_opt.hpp"

namespace scenefit::mesh_opt {

struct MeshOptConfig {
  int mesh_level = 2;  // 162 vertices
  int cage_level = 1;  // 42 vertices
  double cage_inflation = 1.3;
  optim::AdamwConfig adamw;
  scene_opt::LossWeights weights;
  scene_opt::BarrierConfig barrier;
  render::RenderConfig render;
  double disparity_eps = 1e-3;
  /// Meshes are kept every this many steps; 0 disables.
  int snapshot_every = 500;

  void validate() const {
    if (mesh_level < 0 || cage_level < 0) throw InvalidInput("icosphere levels must be non-negative");
    if (!(cage_inflation > 1.0)) throw InvalidInput("cage inflation must exceed 1");
    if (!(disparity_eps > 0.0)) throw InvalidInput("disparity eps must be positive");
    if (snapshot_every < 0) throw InvalidInput("snapshot interval must be non-negative");
    adamw.validate();
    weights.validate();
    barrier.validate();
    render.soft_mask.validate();
  }
};

/// Rest state of one object: cage, frozen weights and the length unit
/// (geometric-mean sphere radius) in which cage offsets, the Laplacian and
/// the volumes are measured.
struct ObjectRig {
  Cage cage;
  MvcWeights weights;
  std::vector<Face> faces;
  std::vector<std::vector<int>> neighbors;
  double unit = 1.0;
  double sphere_volume = 0.0;  // meters³
};

/// Icosphere mesh for a sphere, radially scaled so its volume equals the
/// sphere's.
inline TriMesh sphere_mesh(const render::Sphere& s, int level) {
  TriMesh m = icosphere(level);
  const double unit_volume = std::fabs(signed_volume(m.vertices, m.faces));
  const double k = std::cbrt(4.0 / 3.0 * std::numbers::pi / unit_volume);
  for (auto& v : m.vertices) v = s.center + hadamard(s.radii, v) * k;
  return m;
}

inline double sphere_volume(const render::Sphere& s) {
  return 4.0 / 3.0 * std::numbers::pi * s.radii.x * s.radii.y * s.radii.z;
}

inline ObjectRig make_rig(const render::Sphere& s, const MeshOptConfig& cfg) {
  ObjectRig r;
  const TriMesh m = sphere_mesh(s, cfg.mesh_level);
  r.cage = make_cage(s, cfg.cage_level, cfg.cage_inflation);
  r.weights = mvc_weights(m.vertices, r.cage);
  r.faces = m.faces;
  r.neighbors = vertex_neighbors(m);
  r.unit = std::cbrt(s.radii.x * s.radii.y * s.radii.z);
  r.sphere_volume = sphere_volume(s);
  return r;
}

struct MeshFit {
  render::SceneModel scene;  // meshes at the best step
  std::vector<Cage> cages;   // at the best step
  std::vector<PoseFit> poses;
  std::vector<scene_opt::TraceRecord> trace;  // one record per evaluated step
  scene_opt::LossBreakdown initial_loss, final_loss;
  int best_step = 0;
  /// First step at which a cage face turned inside out, -1 if never.
  std::vector<int> cage_inversion_step;
  std::vector<std::pair<int, std::vector<TriMesh>>> snapshots;
};

/// Objective over the stacked normalized cage offsets of all objects.
class MeshObjective {
 public:
  MeshObjective(const ObservationSet& obs, const render::SceneModel& scene, std::vector<ObjectRig> rigs,
                const MeshOptConfig& cfg)
      : obs_(&obs), scene_(scene), rigs_(std::move(rigs)), cfg_(&cfg) {
    for (std::size_t k = 0; k < rigs_.size(); ++k) {
      offset_.push_back(size_);
      size_ += 3 * rigs_[k].cage.rest_vertices.size();
    }
  }

  std::size_t size() const { return size_; }
  const std::vector<ObjectRig>& rigs() const { return rigs_; }

  std::vector<Vec3d> cage_vertices(std::span<const double> x, std::size_t k) const {
    const ObjectRig& r = rigs_[k];
    std::vector<Vec3d> c(r.cage.rest_vertices.size());
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double* p = x.data() + offset_[k] + 3 * j;
      c[j] = r.cage.rest_vertices[j] + Vec3d{p[0], p[1], p[2]} * r.unit;
    }
    return c;
  }

  /// Scene with the meshes at x.
  render::SceneModel scene_at(std::span<const double> x) const {
    render::SceneModel s = scene_;
    for (std::size_t k = 0; k < rigs_.size(); ++k)
      s.objects[k].shape = TriMesh{deform(rigs_[k].weights, cage_vertices(x, k)), rigs_[k].faces};
    return s;
  }

  double operator()(std::span<const double> x, std::span<double> gx) {
    const render::SceneModel s = scene_at(x);
    const render::RenderOutput out = render::render(s, cfg_->render);
    scene_opt::PixelLoss pl = scene_opt::scene_data_loss(*obs_, out, cfg_->weights, true);
    scene_opt::LossBreakdown& b = pl.breakdown;
    const scene_opt::LossWeights& w = cfg_->weights;
    std::vector<double> g_smooth(out.depth.pixels(), 0.0);
    for (std::size_t k = 0; k < rigs_.size(); ++k) {
      std::fill(g_smooth.begin(), g_smooth.end(), 0.0);
      const Mask visible = out.visibility(static_cast<int>(k));
      b.objects[k].smooth = disparity_smoothness(out.depth, obs_->rgb, cfg_->disparity_eps, &visible, g_smooth);
      for (std::size_t i = 0; i < g_smooth.size(); ++i) pl.adjoint.depth[i] += w.w_smooth * g_smooth[i];
    }
    render::GradientRequest req{false, false, false, true};
    const std::vector<double> g = render::render_backward(s, cfg_->render, out, pl.adjoint, req);
    const render::ParamIndex idx(s);

    double reg = 0.0;
    for (std::size_t k = 0; k < rigs_.size(); ++k) {
      const ObjectRig& r = rigs_[k];
      const std::vector<Vec3d>& v = s.objects[k].mesh().vertices;
      scene_opt::ObjectLoss& ol = b.objects[k];
      std::vector<Vec3d> gv(v.size());
      const std::size_t geo = idx.geometry(static_cast<int>(k));
      for (std::size_t i = 0; i < v.size(); ++i) gv[i] = {g[geo + 3 * i], g[geo + 3 * i + 1], g[geo + 3 * i + 2]};

      // Laplacian in object units: (1/u²) of the metric value.
      std::vector<Vec3d> g_lap(v.size());
      const double inv_u2 = 1.0 / (r.unit * r.unit);
      ol.lap = laplacian_loss(v, r.neighbors, g_lap) * inv_u2;
      for (std::size_t i = 0; i < v.size(); ++i) gv[i] += g_lap[i] * (w.w_lap * inv_u2);

      const double inv_u3 = inv_u2 / r.unit;
      ol.volume_mesh = std::fabs(signed_volume(v, r.faces));
      ol.volume_sphere = r.sphere_volume;
      ol.vol = volume_loss(r.sphere_volume * inv_u3, ol.volume_mesh * inv_u3);
      mesh_volume_gradient(v, r.faces, gv, w.w_vol * 2.0 * (ol.volume_mesh - r.sphere_volume) * inv_u3 * inv_u3);

      reg += w.w_smooth * ol.smooth + w.w_lap * ol.lap + w.w_vol * ol.vol;
      const std::vector<Vec3d> gc = deform_pullback(r.weights, gv);
      for (std::size_t j = 0; j < gc.size(); ++j)
        for (int a = 0; a < 3; ++a) gx[offset_[k] + 3 * j + a] = gc[j][a] * r.unit;
    }
    scene_opt::BarrierConfig eff = cfg_->barrier;
    eff.weight = scene_opt::effective_barrier_weight(w, cfg_->barrier);
    b.barrier = scene_opt::scene_barrier(s, eff);
    b.regularizer = reg;
    b.total = b.data + b.barrier + b.regularizer;
    last_ = b;
    return b.total;
  }

  const scene_opt::LossBreakdown& last() const { return last_; }

 private:
  const ObservationSet* obs_;
  render::SceneModel scene_;
  std::vector<ObjectRig> rigs_;
  const MeshOptConfig* cfg_;
  std::vector<std::size_t> offset_;
  std::size_t size_ = 0;
  scene_opt::LossBreakdown last_;
};

/// Replaces every sphere of `spheres` by a cage-driven mesh and runs AdamW.
/// Returns the lowest-loss meshes and their PCA poses.
inline MeshFit optimize_meshes(const ObservationSet& obs, const render::SceneModel& spheres, const MeshOptConfig& cfg) {
  cfg.validate();
  obs.validate();
  if (spheres.objects.size() != obs.masks.size()) throw InvalidInput("need one object per mask");
  std::vector<ObjectRig> rigs;
  for (const auto& o : spheres.objects) {
    if (!o.is_sphere()) throw InvalidInput("mesh stage expects sphere objects");
    rigs.push_back(make_rig(o.sphere(), cfg));
  }
  MeshObjective obj(obs, spheres, std::move(rigs), cfg);
  const std::size_t n_obj = spheres.objects.size();

  MeshFit fit;
  fit.cage_inversion_step.assign(n_obj, -1);
  diff::Objective f = [&obj](std::span<const double> x, std::span<double> g) { return obj(x, g); };
  auto observer = [&](int step, std::span<const double> x, double) {
    fit.trace.push_back({'M', step, obj.last()});
    for (std::size_t k = 0; k < n_obj; ++k) {
      if (fit.cage_inversion_step[k] >= 0) continue;
      Cage c = obj.rigs()[k].cage;
      c.vertices = obj.cage_vertices(x, k);
      if (inverted_faces(c) > 0) fit.cage_inversion_step[k] = step;
    }
    if (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0) {
      const render::SceneModel s = obj.scene_at(x);
      std::vector<TriMesh> meshes;
      for (const auto& o : s.objects) meshes.push_back(o.mesh());
      fit.snapshots.emplace_back(step, std::move(meshes));
    }
    return true;
  };
  const std::vector<double> x0(obj.size(), 0.0);
  const optim::AdamwResult r = optim::adamw_minimize(f, x0, cfg.adamw, observer);
  fit.trace.push_back({'M', cfg.adamw.steps, obj.last()});
  fit.initial_loss = fit.trace.front().breakdown;

  std::vector<double> g(obj.size());
  obj(r.best_x, g);
  fit.final_loss = obj.last();
  fit.best_step = r.best_step;
  fit.scene = obj.scene_at(r.best_x);
  for (std::size_t k = 0; k < n_obj; ++k) {
    Cage c = obj.rigs()[k].cage;
    c.vertices = obj.cage_vertices(r.best_x, k);
    fit.cages.push_back(std::move(c));
    fit.poses.push_back(pca_pose(fit.scene.objects[k].mesh().vertices));
  }
  return fit;
}

}  // namespace scenefit::mesh_opt
