#pragma once

// End-to-end reconstruction: subsample, back-project and partition the
// depth, fit one ellipsoid per mask, fit spheres, light and materials, refine
// the spheres into meshes and read off poses. Objects whose stage fails are
// dropped from the later stages; the rest carry on.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scenefit/ellipsoid/ellipsoid.hpp"
#include "scenefit/mesh_opt/mesh_opt.hpp"
#include "scenefit/metrics/metrics.hpp"
#include "scenefit/pipeline/config.hpp"
#include "scenefit/pipeline/io.hpp"
#include "scenefit/scene_opt/floor_fit.hpp"
#include "scenefit/scene_opt/scene_opt.hpp"

namespace scenefit::pipeline {

/// Nearest-pixel subsampling with matching intrinsics: output pixel c reads
/// input pixel round(c / fraction).
inline ObservationSet downsample(const ObservationSet& obs, double fraction) {
  obs.validate();
  if (fraction == 1.0) return obs;
  ObservationSet out;
  out.intrinsics = obs.intrinsics.scaled(fraction);
  const int w = out.intrinsics.width, h = out.intrinsics.height;
  const int sw = obs.intrinsics.width, sh = obs.intrinsics.height;
  auto src = [&](int c, int n) { return std::min(static_cast<int>(std::lround(c / fraction)), n - 1); };
  out.rgb = ImageD(w, h, 3);
  out.depth = ImageD(w, h, 1);
  out.masks.assign(obs.masks.size(), Mask(w, h, 1));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int sc = src(c, sw), sr = src(r, sh);
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(c, r, ch) = obs.rgb.at(sc, sr, ch);
      out.depth.at(c, r) = obs.depth.at(sc, sr);
      for (std::size_t k = 0; k < obs.masks.size(); ++k) out.masks[k].at(c, r) = obs.masks[k].at(sc, sr);
    }
  return out;
}

/// Radius estimate of a cloud seen from the front: sum of the lateral
/// standard deviations.
inline double cloud_radius(const CloudStats& s) { return s.stddev.x + s.stddev.y; }

/// A MAP fit is replaced when it diverged, left the prior's size range, or
/// grew far beyond the cloud (planar faces let it flatten into a large
/// grazing ellipsoid).
inline bool needs_fallback(const ellipsoid::EllipsoidFit& fit, const CloudStats& stats,
                           const ellipsoid::PriorConfig& prior) {
  if (fit.diverged) return true;
  const Vec3d ax = fit.params.semi_axes();
  const double r = cloud_radius(stats);
  const double largest = std::max({ax.x, ax.y, ax.z});
  return largest > prior.d_max || largest > 3.0 * r || norm(fit.params.position - stats.mean) > 3.0 * r;
}

/// Sphere from the cloud moments, pushed half a radius behind the visible crust.
inline ellipsoid::EllipsoidParams moment_sphere(const CloudStats& stats) {
  const double r = cloud_radius(stats);
  return {stats.mean + normalized(stats.mean) * (0.5 * r), {r * r, r * r, r * r}};
}

inline Vec3d object_center(const render::SceneObject& o) {
  if (o.is_sphere()) return o.sphere().center;
  Vec3d c;
  for (const auto& v : o.mesh().vertices) c += v;
  return c / static_cast<double>(o.mesh().vertices.size());
}

struct ObjectResult {
  /// "ok", "empty_object_cloud", or "failed:<stage>".
  std::string status = "ok";
  std::string error;
  bool ellipsoid_fallback = false;
  ellipsoid::EllipsoidParams ellipsoid;
  std::optional<render::Sphere> sphere;  // stage 3
  std::optional<mesh_opt::PoseFit> pose;
  std::optional<metrics::MetricReport> metrics;
  std::optional<metrics::MetricReport> sphere_metrics;
  double center_error = 0.0;  // meters, with ground truth
  double sphere_center_error = 0.0;

  bool ok() const { return status == "ok"; }
};

struct StageTimes {
  double camera = 0.0, ellipsoid = 0.0, scene = 0.0, mesh = 0.0, metrics = 0.0;  // seconds
};

struct Reconstruction {
  ObservationSet obs;        // at the processing resolution
  std::vector<int> active;   // mask indices that reach stage 3, in scene order
  render::FloorModel floor;  // estimated geometry
  std::optional<scene_opt::SceneFit> scene_fit;
  std::optional<mesh_opt::MeshFit> mesh_fit;
  render::SceneModel scene;  // final estimate, objects in `active` order
  std::vector<ObjectResult> objects;  // one per input mask
  std::string failed_stage;           // scene-wide failure, empty if none
  std::string failure;
  StageTimes times;

  bool partial() const {
    if (!failed_stage.empty()) return true;
    for (const auto& o : objects)
      if (!o.ok()) return true;
    return false;
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline ObservationSet select_masks(const ObservationSet& obs, const std::vector<int>& active) {
  ObservationSet sub = obs;
  sub.masks.clear();
  for (int k : active) sub.masks.push_back(obs.masks[k]);
  return sub;
}

}  // namespace detail

/// Metrics of an estimated scene against ground truth. `mask_index[j]` is
/// the ground-truth object estimated by est.objects[j]. Both scenes are
/// rendered once at the ground-truth intrinsics.
inline void evaluate_objects(const render::SceneModel& est_in, const std::vector<int>& mask_index,
                             const render::SceneModel& gt, const PipelineConfig& cfg,
                             std::vector<ObjectResult>& results, bool sphere_stage = false) {
  if (est_in.objects.size() != mask_index.size()) throw InvalidInput("mask index does not match the estimate");
  render::SceneModel est = est_in;
  est.intrinsics = gt.intrinsics;
  const render::RenderOutput ro_est = render::render(est), ro_gt = render::render(gt);
  for (std::size_t j = 0; j < mask_index.size(); ++j) {
    const int k = mask_index[j];
    if (k < 0 || k >= static_cast<int>(gt.objects.size())) throw InvalidInput("mask index out of range");
    const TriMesh gm = metrics::object_mesh(gt.objects[k]);
    const TriMesh em = metrics::object_mesh(est.objects[j]);
    const auto gs = metrics::sample_surface(gm, cfg.metric_samples, 1000 + k);
    const auto es = metrics::sample_surface(em, cfg.metric_samples, 2000 + k);
    metrics::MetricReport m;
    m.chamfer_e3 = 1e3 * metrics::chamfer(es, gs);
    m.hausdorff = metrics::hausdorff(es, gs);
    const metrics::VisibleSurface ve{ro_est.depth, ro_est.visibility(static_cast<int>(j))};
    const metrics::VisibleSurface vg{ro_gt.depth, ro_gt.visibility(k)};
    m.ar_vsd = metrics::vsd_recall(ve, vg, metrics::diameter(gm.vertices), cfg.vsd);
    m.iou = metrics::mask_iou(ve.visible, vg.visible);
    const double ce = norm(object_center(est.objects[j]) - object_center(gt.objects[k]));
    if (sphere_stage) {
      results[k].sphere_metrics = m;
      results[k].sphere_center_error = ce;
    } else {
      results[k].metrics = m;
      results[k].center_error = ce;
    }
  }
}

/// Runs every stage. With `gt` (at the input resolution), per-object metrics
/// are filled in for the stage-3 spheres and the final estimate.
inline Reconstruction reconstruct(const ObservationSet& input, const PipelineConfig& cfg,
                                  const render::SceneModel* gt = nullptr) {
  cfg.validate();
  input.validate();
  if (input.masks.empty()) throw InvalidInput("reconstruction needs at least one mask");
  if (gt && gt->objects.size() != input.masks.size()) throw InvalidInput("ground truth needs one object per mask");
  Reconstruction rec;
  rec.objects.resize(input.masks.size());

  auto t0 = detail::Clock::now();
  rec.obs = downsample(input, cfg.resolution_fraction);
  const std::vector<ObjectCloud> parts = partition_by_masks(backproject(rec.obs.depth, rec.obs.intrinsics), rec.obs.masks);
  render::FloorModel layout;
  layout.pattern = cfg.floor_pattern;
  try {
    rec.floor = scene_opt::estimate_floor(rec.obs, layout);
  } catch (const Error& e) {
    rec.failed_stage = "floor";
    rec.failure = e.what();
  }
  rec.times.camera = detail::seconds_since(t0);

  t0 = detail::Clock::now();
  std::vector<ellipsoid::EllipsoidParams> ellipsoids;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    ObjectResult& o = rec.objects[k];
    if (parts[k].empty_object_cloud) {
      o.status = "empty_object_cloud";
      o.error = EmptyObjectCloud(k).what();
      continue;
    }
    try {
      const CloudStats stats = cloud_stats(parts[k].cloud);
      const ellipsoid::EllipsoidFit fit = ellipsoid::fit_map(parts[k].cloud, cfg.prior);
      o.ellipsoid_fallback = needs_fallback(fit, stats, cfg.prior);
      o.ellipsoid = o.ellipsoid_fallback ? moment_sphere(stats) : fit.params;
      rec.active.push_back(static_cast<int>(k));
      ellipsoids.push_back(o.ellipsoid);
    } catch (const Error& e) {
      o.status = "failed:ellipsoid";
      o.error = e.what();
    }
  }
  rec.times.ellipsoid = detail::seconds_since(t0);
  if (!rec.failed_stage.empty() || rec.active.empty()) {
    if (rec.failed_stage.empty()) rec.failed_stage = "ellipsoid";
    return rec;
  }

  const ObservationSet sub = detail::select_masks(rec.obs, rec.active);
  t0 = detail::Clock::now();
  try {
    rec.scene_fit = scene_opt::optimize_scene(sub, ellipsoids, rec.floor, cfg.scene_config());
    rec.scene = rec.scene_fit->scene;
    for (std::size_t j = 0; j < rec.active.size(); ++j) rec.objects[rec.active[j]].sphere = rec.scene.objects[j].sphere();
  } catch (const Error& e) {
    rec.failed_stage = "scene";
    rec.failure = e.what();
    for (int k : rec.active) rec.objects[k].status = "failed:scene";
  }
  rec.times.scene = detail::seconds_since(t0);

  if (rec.scene_fit && cfg.mesh_stage) {
    t0 = detail::Clock::now();
    try {
      rec.mesh_fit = mesh_opt::optimize_meshes(sub, rec.scene_fit->scene, cfg.mesh_config());
      rec.scene = rec.mesh_fit->scene;
      for (std::size_t j = 0; j < rec.active.size(); ++j) rec.objects[rec.active[j]].pose = rec.mesh_fit->poses[j];
    } catch (const Error& e) {
      rec.failed_stage = "mesh";
      rec.failure = e.what();
    }
    rec.times.mesh = detail::seconds_since(t0);
  }
  if (rec.scene_fit && !rec.mesh_fit) {
    for (std::size_t j = 0; j < rec.active.size(); ++j) {
      const TriMesh m = mesh_opt::sphere_mesh(rec.scene.objects[j].sphere(), cfg.mesh_level);
      rec.objects[rec.active[j]].pose = mesh_opt::pca_pose(m.vertices);
    }
  }

  if (gt && rec.scene_fit) {
    t0 = detail::Clock::now();
    evaluate_objects(rec.scene_fit->scene, rec.active, *gt, cfg, rec.objects, true);
    evaluate_objects(rec.scene, rec.active, *gt, cfg, rec.objects);
    rec.times.metrics = detail::seconds_since(t0);
  }
  return rec;
}

inline json metric_json(const std::optional<metrics::MetricReport>& m) { return m ? json(*m) : json(nullptr); }

inline json stage_times_json(const StageTimes& t) {
  return {{"camera", t.camera}, {"ellipsoid", t.ellipsoid}, {"scene", t.scene}, {"mesh", t.mesh}, {"metrics", t.metrics}};
}

inline json reconstruction_report(const Reconstruction& rec, const PipelineConfig& cfg) {
  json objs = json::array();
  for (std::size_t k = 0; k < rec.objects.size(); ++k) {
    const ObjectResult& o = rec.objects[k];
    json j{{"mask", k}, {"status", o.status}, {"ellipsoid_fallback", o.ellipsoid_fallback}, {"ellipsoid", o.ellipsoid}};
    if (!o.error.empty()) j["error"] = o.error;
    j["sphere"] = o.sphere ? json(*o.sphere) : json(nullptr);
    if (o.pose) {
      j["pose"] = pose_json(o.pose->pose);
      j["pose_degenerate"] = o.pose->degenerate_covariance;
    }
    if (o.metrics) {
      j["metrics"] = metric_json(o.metrics);
      j["center_error"] = o.center_error;
    }
    if (o.sphere_metrics) {
      j["sphere_metrics"] = metric_json(o.sphere_metrics);
      j["sphere_center_error"] = o.sphere_center_error;
    }
    objs.push_back(std::move(j));
  }
  json r{{"seed", cfg.seed}, {"resolution_fraction", cfg.resolution_fraction},
         {"processing_intrinsics", rec.obs.intrinsics}, {"partial", rec.partial()}, {"objects", objs}};
  if (!rec.failed_stage.empty()) r["failed_stage"] = {{"stage", rec.failed_stage}, {"error", rec.failure}};
  if (rec.scene_fit) {
    const auto& f = *rec.scene_fit;
    r["scene_stage"] = {{"initial_loss", scene_opt::breakdown_json(f.initial_loss)},
                        {"final_loss", scene_opt::breakdown_json(f.final_loss)},
                        {"phase_a_iterations", f.phase_a.iterations},
                        {"phase_b_iterations", f.phase_b.iterations},
                        {"phase_b_material_only_iterations", f.phase_b.material_only_iterations},
                        {"diverged", f.diverged}};
  }
  if (rec.mesh_fit) {
    const auto& f = *rec.mesh_fit;
    json inv = f.cage_inversion_step;
    r["mesh_stage"] = {{"initial_loss", scene_opt::breakdown_json(f.initial_loss)},
                       {"final_loss", scene_opt::breakdown_json(f.final_loss)},
                       {"best_step", f.best_step},
                       {"cage_inversion_step", inv}};
  }
  return r;
}

/// Thread count used by the OpenMP kernels.
inline int thread_count() { return omp_get_max_threads(); }

/// Writes meshes, poses, materials, light, scene, previews, traces, the
/// report and provenance. Wall-clock times go to timings.json, the only file
/// that differs between repeated runs.
inline void write_reconstruction(const fs::path& dir, const Reconstruction& rec, const PipelineConfig& cfg) {
  fs::create_directories(dir / "meshes");
  json scene = rec.scene;
  scene["mask_index"] = rec.active;
  if (rec.scene_fit) {
    write_json(dir / "scene.json", scene);
    json mats = json::array();
    for (std::size_t j = 0; j < rec.active.size(); ++j)
      mats.push_back({{"mask", rec.active[j]}, {"material", rec.scene.objects[j].material}});
    write_json(dir / "materials.json", {{"objects", mats}, {"floor", rec.scene.floor.material}});
    write_json(dir / "light.json", rec.scene.light);
    for (std::size_t j = 0; j < rec.active.size(); ++j)
      write_obj(dir / "meshes" / ("object_" + std::to_string(rec.active[j]) + ".obj"),
                rec.scene.objects[j].is_sphere() ? mesh_opt::sphere_mesh(rec.scene.objects[j].sphere(), cfg.mesh_level)
                                                 : rec.scene.objects[j].mesh());
    save_rgb(dir / "preview_spheres.png", render::render(rec.scene_fit->scene).rgb);
    save_rgb(dir / "preview.png", render::render(rec.scene).rgb);
    write_text(dir / "trace_scene.jsonl", scene_opt::trace_jsonl(rec.scene_fit->trace, "scene"));
  }
  if (rec.mesh_fit) write_text(dir / "trace_mesh.jsonl", scene_opt::trace_jsonl(rec.mesh_fit->trace, "mesh"));
  json poses = json::array();
  for (std::size_t k = 0; k < rec.objects.size(); ++k) {
    const ObjectResult& o = rec.objects[k];
    poses.push_back({{"mask", k}, {"status", o.status}, {"pose", o.pose ? pose_json(o.pose->pose) : json(nullptr)}});
  }
  write_json(dir / "poses.json", {{"objects", poses}});
  write_json(dir / "report.json", reconstruction_report(rec, cfg));
  write_json(dir / "config.json", cfg);
  write_json(dir / "provenance.json", {{"config_hash", config_hash(cfg)},
                                       {"seed", cfg.seed},
                                       {"threads", thread_count()},
                                       {"timings", "timings.json"}});
  write_json(dir / "timings.json", stage_times_json(rec.times));
}

}  // namespace scenefit::pipeline
