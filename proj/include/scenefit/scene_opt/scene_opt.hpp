#pragma once

// Sphere-stage scene fit: light, floor appearance, then per-object position,
// radii and materials, each phase by L-BFGS on the masked render loss plus
// barrier penalties.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenefit/camera/camera.hpp"
#include "scenefit/diff/param_vector.hpp"
#include "scenefit/ellipsoid/ellipsoid.hpp"
#include "scenefit/optim/lbfgs.hpp"
#include "scenefit/render/renderer.hpp"
#include "scenefit/scene_opt/losses.hpp"

namespace scenefit::scene_opt {

/// Positions restricted to p = o + t d.
struct LineConstraint {
  Vec3d origin;
  Vec3d direction{0.0, 0.0, 1.0};

  Vec3d point(double t) const { return origin + direction * t; }
  double project(const Vec3d& p) const { return dot(p - origin, direction); }
};

/// Ray from the camera center through the mask centroid pixel.
inline LineConstraint make_line_constraint(const Mask& mask, const CameraIntrinsics& k) {
  double sc = 0.0, sr = 0.0;
  std::size_t n = 0;
  for (int row = 0; row < mask.height; ++row)
    for (int col = 0; col < mask.width; ++col)
      if (mask.at(col, row) != 0) {
        sc += col;
        sr += row;
        ++n;
      }
  if (n == 0) throw EmptyMask();
  const double nn = static_cast<double>(n);
  return {{0.0, 0.0, 0.0}, normalized(k.unproject(sc / nn, sr / nn))};
}

enum class RadiusReading { SquaredSemiAxis, Linear };

inline optim::LbfgsConfig default_phase_lbfgs(int iters) {
  optim::LbfgsConfig c;
  c.max_iters = iters;
  c.grad_tol = 0.0;
  c.plateau_window = 20;
  c.plateau_tol = 1e-5;
  return c;
}

struct SceneOptConfig {
  LossWeights weights;
  BarrierConfig barrier;
  render::RenderConfig render;
  optim::LbfgsConfig phase_a = default_phase_lbfgs(100);
  optim::LbfgsConfig phase_b = default_phase_lbfgs(200);
  bool line_constraint = false;
  /// Multiplies the object image terms during phase A. At the initial
  /// materials those terms are far off and drag the light.
  double phase_a_object_image = 0.0;
  RadiusReading radius_reading = RadiusReading::SquaredSemiAxis;
  std::uint64_t seed = 1;
  /// Light init: uniform in a cube of this side, centered this far above the
  /// mean object center along the floor normal.
  double light_box_size = 1.0;
  double light_box_lift = 0.75;
  double init_intensity_min = 0.5, init_intensity_max = 2.0;
  /// Optimizer units: positions in decimeters, shininess in hundreds.
  double position_unit = 0.1;
  double shininess_unit = 100.0;

  void validate() const {
    weights.validate();
    barrier.validate();
    render.soft_mask.validate();
    phase_a.validate();
    phase_b.validate();
    if (!(init_intensity_min >= 0.0 && init_intensity_min <= init_intensity_max))
      throw InvalidInput("invalid light intensity init range");
    if (!(position_unit > 0.0 && shininess_unit > 0.0)) throw InvalidInput("optimizer units must be positive");
    if (!(phase_a_object_image >= 0.0)) throw InvalidInput("phase_a_object_image must be non-negative");
  }
};

enum class Phase { A, B };

inline char phase_name(Phase p) { return p == Phase::A ? 'A' : 'B'; }

/// Free parameters of one phase in optimizer units and their map to the
/// scene. Radii are optimized as logarithms.
class SceneParameterization {
 public:
  SceneParameterization(const render::SceneModel& s, Phase phase, const std::vector<LineConstraint>* lines,
                        double position_unit, double shininess_unit, bool geometry = true)
      : phase_(phase),
        lines_(lines),
        pos_unit_(position_unit),
        shin_unit_(shininess_unit),
        geometry_(geometry),
        index_(s) {
    if (phase == Phase::A) {
      layout_.add("light.position", 3);
      layout_.add("light.intensity", 1);
      layout_.add("floor.material", render::Material::kSize);
      layout_.add("floor.pattern", 3);
      return;
    }
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      if (!s.objects[k].is_sphere()) throw InvalidInput("scene stage expects sphere objects");
      const std::string p = "obj" + std::to_string(k);
      if (geometry_) {
        if (lines_ != nullptr)
          layout_.add(p + ".t", 1);
        else
          layout_.add(p + ".position", 3);
        layout_.add(p + ".radii", 3);
      }
      layout_.add(p + ".material", render::Material::kSize);
    }
  }

  const diff::ParamLayout& layout() const { return layout_; }

  render::GradientRequest request() const {
    render::GradientRequest r;
    r.light = r.floor = phase_ == Phase::A;
    r.materials = phase_ == Phase::B;
    r.geometry = r.materials && geometry_;
    return r;
  }

  std::vector<double> pack(const render::SceneModel& s) const {
    std::vector<double> x;
    x.reserve(layout_.total());
    auto material = [&](const render::Material& m) {
      x.insert(x.end(), {m.ambient, m.diffuse, m.specular, m.shininess / shin_unit_, m.color.x, m.color.y,
                         m.color.z});
    };
    if (phase_ == Phase::A) {
      x.insert(x.end(), {s.light.position.x, s.light.position.y, s.light.position.z, s.light.intensity});
      material(s.floor.material);
      x.insert(x.end(), {s.floor.pattern.color_b.x, s.floor.pattern.color_b.y, s.floor.pattern.color_b.z});
      return x;
    }
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      const render::Sphere& sp = s.objects[k].sphere();
      if (geometry_) {
        if (lines_ != nullptr) {
          x.push_back((*lines_)[k].project(sp.center) / pos_unit_);
        } else {
          x.insert(x.end(), {sp.center.x / pos_unit_, sp.center.y / pos_unit_, sp.center.z / pos_unit_});
        }
        x.insert(x.end(), {std::log(sp.radii.x), std::log(sp.radii.y), std::log(sp.radii.z)});
      }
      material(s.objects[k].material);
    }
    return x;
  }

  void unpack(std::span<const double> x, render::SceneModel& s) const {
    std::size_t i = 0;
    auto material = [&](render::Material& m) {
      m.ambient = x[i];
      m.diffuse = x[i + 1];
      m.specular = x[i + 2];
      m.shininess = x[i + 3] * shin_unit_;
      m.color = {x[i + 4], x[i + 5], x[i + 6]};
      i += render::Material::kSize;
    };
    if (phase_ == Phase::A) {
      s.light.position = {x[0], x[1], x[2]};
      s.light.intensity = x[3];
      i = 4;
      material(s.floor.material);
      s.floor.pattern.color_b = {x[i], x[i + 1], x[i + 2]};
      return;
    }
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      render::Sphere& sp = s.objects[k].sphere();
      if (geometry_) {
        if (lines_ != nullptr) {
          sp.center = (*lines_)[k].point(x[i] * pos_unit_);
          i += 1;
        } else {
          sp.center = Vec3d{x[i], x[i + 1], x[i + 2]} * pos_unit_;
          i += 3;
        }
        sp.radii = {std::exp(x[i]), std::exp(x[i + 1]), std::exp(x[i + 2])};
        i += 3;
      }
      material(s.objects[k].material);
    }
  }

  /// dL/dx from dL/dtheta in ParamIndex layout, at the scene unpacked from x.
  void pullback(const render::SceneModel& s, std::span<const double> g, std::span<double> gx) const {
    std::size_t i = 0;
    auto material = [&](std::size_t slot) {
      for (int j = 0; j < render::Material::kSize; ++j) gx[i + j] = g[slot + j];
      gx[i + 3] *= shin_unit_;
      i += render::Material::kSize;
    };
    if (phase_ == Phase::A) {
      for (std::size_t j = 0; j < 4; ++j) gx[j] = g[render::ParamIndex::kLightPosition + j];
      i = 4;
      material(render::ParamIndex::kFloorMaterial);
      for (std::size_t j = 0; j < 3; ++j) gx[i + j] = g[render::ParamIndex::kFloorPattern + j];
      return;
    }
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      if (geometry_) {
        const std::size_t geo = index_.geometry(static_cast<int>(k));
        const Vec3d gp{g[geo], g[geo + 1], g[geo + 2]};
        if (lines_ != nullptr) {
          gx[i++] = dot(gp, (*lines_)[k].direction) * pos_unit_;
        } else {
          for (int j = 0; j < 3; ++j) gx[i++] = gp[j] * pos_unit_;
        }
        const Vec3d r = s.objects[k].sphere().radii;
        for (int j = 0; j < 3; ++j) gx[i++] = g[geo + 3 + j] * r[j];
      }
      material(index_.material(static_cast<int>(k)));
    }
  }

 private:
  Phase phase_;
  const std::vector<LineConstraint>* lines_;
  double pos_unit_, shin_unit_;
  bool geometry_;
  render::ParamIndex index_;
  diff::ParamLayout layout_;
};

/// Full scene loss: data terms plus barriers, the barrier weight scaled by
/// the mean data weight so a common rescaling of w_i, w_d, w_m rescales the
/// whole objective.
inline double effective_barrier_weight(const LossWeights& w, const BarrierConfig& b) {
  return b.weight * (w.w_i + w.w_d + w.w_m) / 3.0;
}

inline LossBreakdown scene_loss(const ObservationSet& obs, const render::SceneModel& s, const render::RenderOutput& out,
                                const LossWeights& w, const BarrierConfig& b) {
  LossBreakdown r = scene_data_loss(obs, out, w, false).breakdown;
  BarrierConfig eff = b;
  eff.weight = effective_barrier_weight(w, b);
  r.barrier = scene_barrier(s, eff);
  r.total = r.data + r.barrier;
  return r;
}

struct TraceRecord {
  char phase = 'A';
  int iteration = 0;
  LossBreakdown breakdown;
};

/// Objective over one phase's parameters. Remembers the breakdown of every
/// evaluation since the last accepted step so the trace needs no re-render.
class SceneObjective {
 public:
  SceneObjective(const ObservationSet& obs, render::SceneModel scene, const SceneParameterization& par,
                 const SceneOptConfig& cfg)
      : obs_(&obs), scene_(std::move(scene)), par_(&par), cfg_(&cfg) {}

  double operator()(std::span<const double> x, std::span<double> gx) {
    const double inf = std::numeric_limits<double>::infinity();
    par_->unpack(x, scene_);
    render::RenderOutput out;
    try {
      out = render::render(scene_, cfg_->render);
    } catch (const InvalidInput&) {
      std::fill(gx.begin(), gx.end(), 0.0);
      return inf;
    }
    PixelLoss pl = scene_data_loss(*obs_, out, cfg_->weights, true);
    BarrierConfig eff = cfg_->barrier;
    eff.weight = effective_barrier_weight(cfg_->weights, cfg_->barrier);
    std::vector<double> g = render::render_backward(scene_, cfg_->render, out, pl.adjoint, par_->request());
    pl.breakdown.barrier = scene_barrier(scene_, eff, g);
    pl.breakdown.total = pl.breakdown.data + pl.breakdown.barrier;
    par_->pullback(scene_, g, gx);
    ++evaluations_;
    recent_.emplace_back(std::vector<double>(x.begin(), x.end()), pl.breakdown);
    if (!std::isfinite(pl.breakdown.total)) return inf;
    return pl.breakdown.total;
  }

  /// Breakdown of an already evaluated point; clears the history.
  LossBreakdown take(std::span<const double> x) {
    LossBreakdown found;
    for (auto it = recent_.rbegin(); it != recent_.rend(); ++it)
      if (std::equal(it->first.begin(), it->first.end(), x.begin(), x.end())) {
        found = it->second;
        break;
      }
    recent_.clear();
    return found;
  }

  render::SceneModel scene_at(std::span<const double> x) const {
    render::SceneModel s = scene_;
    par_->unpack(x, s);
    return s;
  }

  int evaluations() const { return evaluations_; }

 private:
  const ObservationSet* obs_;
  render::SceneModel scene_;
  const SceneParameterization* par_;
  const SceneOptConfig* cfg_;
  int evaluations_ = 0;
  std::vector<std::pair<std::vector<double>, LossBreakdown>> recent_;
};

struct PhaseResult {
  optim::LbfgsStatus status = optim::LbfgsStatus::MaxIterations;
  int iterations = 0;
  int evaluations = 0;
  int material_only_iterations = 0;
};

struct SceneFit {
  render::SceneModel scene;
  render::SceneModel initial;
  LossBreakdown initial_loss;
  LossBreakdown final_loss;
  std::vector<TraceRecord> trace;
  std::vector<LineConstraint> lines;  // empty unless the line constraint is on
  std::vector<double> line_t;
  PhaseResult phase_a, phase_b;
  bool diverged = false;  // final loss above the initial one; scene holds the initialization
  std::uint64_t seed = 0;
};

/// Mean observed color inside a mask, or mid-gray for an empty mask.
inline Vec3d mean_masked_color(const ImageD& rgb, const Mask& m) {
  Vec3d s;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.pixels(); ++i) {
    if (m.data[i] == 0) continue;
    s += Vec3d{rgb.data[3 * i], rgb.data[3 * i + 1], rgb.data[3 * i + 2]};
    ++n;
  }
  return n == 0 ? Vec3d{0.5, 0.5, 0.5} : s / static_cast<double>(n);
}

inline Vec3d radii_from_scale(const Vec3d& s, RadiusReading reading) {
  if (reading == RadiusReading::Linear) return s;
  return {std::sqrt(s.x), std::sqrt(s.y), std::sqrt(s.z)};
}

/// Initial sphere scene: ellipsoid centers and radii, default materials with
/// mean masked colors, and a random light above the objects.
inline render::SceneModel initial_scene(const ObservationSet& obs,
                                        const std::vector<ellipsoid::EllipsoidParams>& ellipsoids,
                                        const render::FloorModel& floor, const SceneOptConfig& cfg) {
  if (ellipsoids.size() != obs.masks.size()) throw InvalidInput("need one ellipsoid per mask");
  render::SceneModel s;
  s.intrinsics = obs.intrinsics;
  s.floor = floor;
  const render::Material defaults{0.1, 0.1, 0.1, 100.0, {0.5, 0.5, 0.5}};
  Mask floor_mask(obs.intrinsics.width, obs.intrinsics.height);
  for (std::size_t i = 0; i < floor_mask.pixels(); ++i) {
    bool any = false;
    for (const auto& m : obs.masks) any = any || m.data[i] != 0;
    floor_mask.data[i] = !any && obs.depth.data[i] > 0.0;
  }
  s.floor.material = defaults;
  s.floor.material.color = mean_masked_color(obs.rgb, floor_mask);
  s.floor.pattern.color_b = s.floor.material.color;

  Vec3d mean_center;
  for (std::size_t k = 0; k < ellipsoids.size(); ++k) {
    render::SceneObject o;
    o.shape = render::Sphere{ellipsoids[k].position, radii_from_scale(ellipsoids[k].scale, cfg.radius_reading)};
    o.material = defaults;
    o.material.color = mean_masked_color(obs.rgb, obs.masks[k]);
    s.objects.push_back(o);
    mean_center += ellipsoids[k].position;
  }
  if (!ellipsoids.empty()) mean_center = mean_center / static_cast<double>(ellipsoids.size());

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> box(-0.5 * cfg.light_box_size, 0.5 * cfg.light_box_size);
  std::uniform_real_distribution<double> intensity(cfg.init_intensity_min, cfg.init_intensity_max);
  const Vec3d box_center = mean_center + floor.up * cfg.light_box_lift;
  const double bx = box(rng), by = box(rng), bz = box(rng);
  s.light.position = box_center + Vec3d{bx, by, bz};
  s.light.intensity = intensity(rng);
  return s;
}

namespace detail {

inline optim::LbfgsResult run_block(const ObservationSet& obs, render::SceneModel& scene,
                                    const SceneParameterization& par, const optim::LbfgsConfig& lcfg,
                                    const SceneOptConfig& cfg, std::vector<TraceRecord>& trace, char name,
                                    int first_iteration, int& evaluations) {
  SceneObjective obj(obs, scene, par, cfg);
  const std::vector<double> x0 = par.pack(scene);
  diff::Objective f = [&obj](std::span<const double> x, std::span<double> g) { return obj(x, g); };
  if (first_iteration == 0) {
    std::vector<double> g0(x0.size());
    obj(x0, g0);
    trace.push_back({name, 0, obj.take(x0)});
  }
  const optim::LbfgsResult r = optim::lbfgs_minimize(f, x0, lcfg, [&](int it, std::span<const double> x, double) {
    trace.push_back({name, first_iteration + it, obj.take(x)});
  });
  scene = obj.scene_at(r.x);
  evaluations += obj.evaluations();
  return r;
}

/// One phase. A phase-B run stopped by a failed line search (a pixel flip
/// at the silhouette) continues on the materials alone with the rest of the
/// budget, since shading is smooth in them.
inline PhaseResult run_phase(const ObservationSet& obs, render::SceneModel& scene, Phase phase,
                             const std::vector<LineConstraint>* lines, const optim::LbfgsConfig& lcfg,
                             const SceneOptConfig& cfg, std::vector<TraceRecord>& trace) {
  PhaseResult res;
  const char name = phase_name(phase);
  SceneOptConfig phase_cfg = cfg;
  if (phase == Phase::A) phase_cfg.weights.object_image_scale *= cfg.phase_a_object_image;
  const SceneParameterization par(scene, phase, lines, cfg.position_unit, cfg.shininess_unit);
  const optim::LbfgsResult r = run_block(obs, scene, par, lcfg, phase_cfg, trace, name, 0, res.evaluations);
  res.status = r.status;
  res.iterations = r.iterations;
  if (phase == Phase::B && r.status == optim::LbfgsStatus::LineSearchFailed && r.iterations < lcfg.max_iters) {
    const SceneParameterization shading(scene, phase, lines, cfg.position_unit, cfg.shininess_unit, false);
    optim::LbfgsConfig rest = lcfg;
    rest.max_iters = lcfg.max_iters - r.iterations;
    const optim::LbfgsResult m = run_block(obs, scene, shading, rest, cfg, trace, name, r.iterations, res.evaluations);
    res.status = m.status;
    res.iterations += m.iterations;
    res.material_only_iterations = m.iterations;
  }
  return res;
}

}  // namespace detail

/// Two-phase fit from an initial sphere scene.
inline SceneFit optimize_scene(const ObservationSet& obs, const render::SceneModel& init, const SceneOptConfig& cfg) {
  cfg.validate();
  obs.validate();
  if (init.objects.size() != obs.masks.size()) throw InvalidInput("need one object per mask");
  SceneFit fit;
  fit.seed = cfg.seed;
  fit.initial = init;
  if (cfg.line_constraint) {
    for (std::size_t k = 0; k < init.objects.size(); ++k) {
      fit.lines.push_back(make_line_constraint(obs.masks[k], obs.intrinsics));
      render::Sphere& sp = fit.initial.objects[k].sphere();
      sp.center = fit.lines[k].point(fit.lines[k].project(sp.center));
    }
  }
  fit.initial_loss = scene_loss(obs, fit.initial, render::render(fit.initial, cfg.render), cfg.weights, cfg.barrier);
  if (!std::isfinite(fit.initial_loss.total)) throw NonFiniteLoss("scene initialization");

  render::SceneModel scene = fit.initial;
  const std::vector<LineConstraint>* lines = cfg.line_constraint ? &fit.lines : nullptr;
  fit.phase_a = detail::run_phase(obs, scene, Phase::A, lines, cfg.phase_a, cfg, fit.trace);
  fit.phase_b = detail::run_phase(obs, scene, Phase::B, lines, cfg.phase_b, cfg, fit.trace);
  fit.final_loss = fit.trace.back().breakdown;

  fit.diverged = !(fit.final_loss.total <= fit.initial_loss.total);
  fit.scene = fit.diverged ? fit.initial : scene;
  if (fit.diverged) fit.final_loss = fit.initial_loss;
  for (std::size_t k = 0; k < fit.lines.size(); ++k) fit.line_t.push_back(fit.lines[k].project(fit.scene.objects[k].sphere().center));
  return fit;
}

/// Convenience overload: builds the initial scene from ellipsoid fits.
inline SceneFit optimize_scene(const ObservationSet& obs, const std::vector<ellipsoid::EllipsoidParams>& ellipsoids,
                               const render::FloorModel& floor, const SceneOptConfig& cfg) {
  return optimize_scene(obs, initial_scene(obs, ellipsoids, floor, cfg), cfg);
}

inline nlohmann::json breakdown_json(const LossBreakdown& b) {
  nlohmann::json j{{"total", b.total}, {"data", b.data}, {"barrier", b.barrier}, {"regularizer", b.regularizer},
                   {"floor_mae_i", b.floor_mae_i}};
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : b.objects) {
    objs.push_back({{"mae_i", o.mae_i}, {"mae_d", o.mae_d}, {"mae_m", o.mae_m}, {"smooth", o.smooth},
                    {"lap", o.lap}, {"vol", o.vol}, {"volume_sphere", o.volume_sphere},
                    {"volume_mesh", o.volume_mesh}});
  }
  j["objects"] = std::move(objs);
  return j;
}

/// One JSON object per line: stage, step and loss components.
inline std::string trace_jsonl(const std::vector<TraceRecord>& trace, const std::string& stage = "scene") {
  std::ostringstream os;
  for (const auto& r : trace) {
    nlohmann::json j = breakdown_json(r.breakdown);
    j["stage"] = stage;
    j["phase"] = std::string(1, r.phase);
    j["step"] = r.iteration;
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace scenefit::scene_opt
