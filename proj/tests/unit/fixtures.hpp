#pragma once

#include <cmath>
#include <numbers>

#include "scenefit/render/renderer.hpp"

namespace fixtures {

using namespace scenefit;
using namespace scenefit::render;

inline CameraIntrinsics intrinsics(int w, int h) {
  const double f = 1000.0 * w / 640.0;
  return {f, f, w / 2.0, h / 2.0, w, h};
}

/// Camera 0.45 m above a checkered floor, pitched 45 degrees down.
inline FloorModel tabletop_floor() {
  FloorModel fl;
  const double phi = std::numbers::pi / 4.0;
  fl.up = {0.0, -std::cos(phi), -std::sin(phi)};
  fl.height = 0.45;
  fl.material = {0.3, 0.6, 0.05, 20.0, {0.75, 0.7, 0.65}};
  fl.pattern = {true, {0.45, 0.42, 0.4}, 0.08};
  return fl;
}

/// Point on the floor where the optical axis meets it, shifted in-plane.
inline Vec3d floor_point(const FloorModel& fl, double du = 0.0, double dv = 0.0) {
  const double t = fl.height / -dot(fl.up, Vec3d{0, 0, 1});
  return Vec3d{0, 0, t} + fl.axis_u() * du + fl.axis_v() * dv;
}

inline SceneModel sphere_scene(int w, int h, double radius = 0.035, double du = 0.0, double dv = 0.0) {
  SceneModel s;
  s.intrinsics = intrinsics(w, h);
  s.floor = tabletop_floor();
  s.light = {{0.2, -0.6, 0.3}, 1.5};
  SceneObject o;
  o.shape = Sphere{floor_point(s.floor, du, dv) + s.floor.up * radius, {radius, radius, radius}};
  o.material = {0.2, 0.7, 0.3, 60.0, {0.8, 0.25, 0.2}};
  s.objects.push_back(o);
  return s;
}

inline SceneModel mesh_scene(int w, int h, int level = 2, double radius = 0.04) {
  SceneModel s = sphere_scene(w, h, radius);
  const Vec3d c = s.objects[0].sphere().center;
  TriMesh m = icosphere(level);
  for (auto& v : m.vertices) v = c + Vec3d{v.x * radius * 1.2, v.y * radius, v.z * radius * 0.9};
  s.objects[0].shape = m;
  return s;
}

/// Noise-free observation of a scene with exact per-object masks.
inline ObservationSet observe(const SceneModel& s) {
  const RenderOutput out = scenefit::render::render(s);
  ObservationSet obs;
  obs.rgb = out.rgb;
  obs.depth = out.depth;
  obs.intrinsics = s.intrinsics;
  for (std::size_t k = 0; k < s.objects.size(); ++k) obs.masks.push_back(out.visibility(static_cast<int>(k)));
  return obs;
}

}  // namespace fixtures
