#pragma once

// JSON adapters for the library's value types. Missing keys keep their
// defaults, so partial config files are valid.

#include <string>
#include <vector>

#include "json.hpp"
#include "scenefit/camera/camera.hpp"
#include "scenefit/ellipsoid/ellipsoid.hpp"
#include "scenefit/metrics/metrics.hpp"
#include "scenefit/optim/adamw.hpp"
#include "scenefit/optim/lbfgs.hpp"
#include "scenefit/render/scene.hpp"
#include "scenefit/scene_opt/scene_opt.hpp"

namespace scenefit {

using json = nlohmann::json;

inline void to_json(json& j, const Vec3d& v) { j = json::array({v.x, v.y, v.z}); }

inline void from_json(const json& j, Vec3d& v) {
  if (!j.is_array() || j.size() != 3) throw InvalidInput("expected a 3-vector, got " + j.dump());
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CameraIntrinsics, fx, fy, cx, cy, width, height)

inline void to_json(json& j, const TriMesh& m) { j = {{"vertices", m.vertices}, {"faces", m.faces}}; }

inline void from_json(const json& j, TriMesh& m) {
  m.vertices = j.at("vertices").get<std::vector<Vec3d>>();
  m.faces = j.at("faces").get<std::vector<Face>>();
  m.validate();
}

}  // namespace scenefit

namespace scenefit::optim {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WolfeParams, c1, c2, max_bracket_steps, max_zoom_steps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LbfgsConfig, memory, max_iters, grad_tol, rel_tol, plateau_window,
                                                plateau_tol, line_search)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamwConfig, lr, beta1, beta2, eps, weight_decay, steps)
}  // namespace scenefit::optim

namespace scenefit::ellipsoid {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PriorConfig, sigma_p, sigma_s, d_min, d_max, likelihood_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EllipsoidParams, position, scale)
}  // namespace scenefit::ellipsoid

namespace scenefit::scene_opt {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, w_i, w_d, w_m, w_smooth, w_lap, w_vol, floor_scale,
                                                object_image_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BarrierConfig, curvature, weight, max_shininess, max_intensity)
}  // namespace scenefit::scene_opt

namespace scenefit::metrics {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VsdConfig, tau_fractions, theta)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MetricReport, chamfer_e3, hausdorff, ar_vsd, iou)
}  // namespace scenefit::metrics

namespace scenefit::render {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SoftMaskConfig, d_min, d_max, background, steepness, valid_eps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Material, ambient, diffuse, specular, shininess, color)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Light, position, intensity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FloorPattern, checker, color_b, cell_size)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FloorModel, enabled, up, height, material, pattern, max_distance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Sphere, center, radii)

inline void to_json(json& j, const SceneObject& o) {
  j = {{"material", o.material}};
  if (o.is_sphere())
    j["sphere"] = o.sphere();
  else
    j["mesh"] = o.mesh();
}

inline void from_json(const json& j, SceneObject& o) {
  o.material = j.value("material", Material{});
  if (j.contains("sphere"))
    o.shape = j.at("sphere").get<Sphere>();
  else if (j.contains("mesh"))
    o.shape = j.at("mesh").get<TriMesh>();
  else
    throw InvalidInput("scene object needs a 'sphere' or a 'mesh'");
}

inline void to_json(json& j, const SceneModel& s) {
  j = {{"intrinsics", s.intrinsics}, {"light", s.light}, {"floor", s.floor}, {"objects", s.objects}};
}

inline void from_json(const json& j, SceneModel& s) {
  s.intrinsics = j.at("intrinsics").get<CameraIntrinsics>();
  s.light = j.value("light", Light{});
  s.floor = j.value("floor", FloorModel{});
  s.objects = j.value("objects", std::vector<SceneObject>{});
  s.validate();
}

}  // namespace scenefit::render
