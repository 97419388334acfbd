#pragma once

// Synthetic tabletop scenes: one to five spheres, cubes and cylinders on a
// checkered floor under one white point light, seen by a camera pitched
// down at the table.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "scenefit/pipeline/json_io.hpp"
#include "scenefit/pipeline/shapes.hpp"
#include "scenefit/render/renderer.hpp"

namespace scenefit::pipeline {

enum class MaterialPreset { Rubber, Metal };

inline std::string to_string(MaterialPreset m) { return m == MaterialPreset::Rubber ? "rubber" : "metal"; }

inline MaterialPreset material_from_string(const std::string& s) {
  if (s == "rubber") return MaterialPreset::Rubber;
  if (s == "metal") return MaterialPreset::Metal;
  throw InvalidInput("unknown material preset '" + s + "'");
}

/// Rubber: specular 0.05; metal: specular 0.8; both with shininess 100.
inline render::Material preset_material(MaterialPreset m, const Vec3d& color) {
  if (m == MaterialPreset::Rubber) return {0.15, 0.75, 0.05, 100.0, color};
  return {0.15, 0.45, 0.8, 100.0, color};
}

struct NamedColor {
  const char* name;
  Vec3d rgb;
};

inline const std::array<NamedColor, 8>& clevr_colors() {
  static const std::array<NamedColor, 8> colors{{{"gray", Vec3d{87, 87, 87} / 255.0},
                                                 {"red", Vec3d{173, 35, 35} / 255.0},
                                                 {"blue", Vec3d{42, 75, 215} / 255.0},
                                                 {"green", Vec3d{29, 105, 20} / 255.0},
                                                 {"brown", Vec3d{129, 74, 25} / 255.0},
                                                 {"purple", Vec3d{129, 38, 192} / 255.0},
                                                 {"cyan", Vec3d{41, 208, 208} / 255.0},
                                                 {"yellow", Vec3d{255, 238, 51} / 255.0}}};
  return colors;
}

/// One object; `size` is its extent in meters (sphere diameter, cube side,
/// cylinder diameter and height). `center` is the volume centroid.
struct ObjectSpec {
  Shape shape = Shape::Sphere;
  double size = 0.05;
  MaterialPreset material = MaterialPreset::Rubber;
  std::string color = "gray";
  Vec3d center;
  double yaw = 0.0;  // about the floor normal, from the floor's u axis

  double bounding_radius() const {
    switch (shape) {
      case Shape::Sphere: return size / 2.0;
      case Shape::Cube: return size * std::sqrt(3.0) / 2.0;
      case Shape::Cylinder: return size / std::numbers::sqrt2;
    }
    return size;
  }
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  render::Light light;
  render::FloorModel floor;
  CameraIntrinsics intrinsics;
  std::uint64_t seed = 0;
};

struct GeneratorConfig {
  int min_objects = 1;
  int max_objects = 5;
  std::vector<Shape> shapes{Shape::Sphere, Shape::Cube, Shape::Cylinder};
  std::vector<double> sizes{0.03, 0.05, 0.07};
  CameraIntrinsics intrinsics{1000.0, 1000.0, 320.0, 240.0, 640, 480};
  double camera_height = 0.45;
  double pitch = std::numbers::pi / 4.0;
  /// Half extents of the placement area around the optical axis's floor point.
  double spread_u = 0.12, spread_v = 0.10;
  double gap = 0.005;
  /// Every object keeps at least this fraction of its own silhouette visible.
  double min_visible = 0.5;
  int max_attempts = 1000;

  void validate() const {
    if (min_objects < 1 || max_objects > 5 || min_objects > max_objects)
      throw InvalidInput("object count range must lie within [1, 5]");
    if (shapes.empty() || sizes.empty()) throw InvalidInput("generator needs shapes and sizes");
    for (double s : sizes)
      if (!(s > 0.0)) throw InvalidInput("object sizes must be positive");
    intrinsics.validate();
    if (max_attempts < 1) throw InvalidInput("max_attempts must be positive");
  }
};

inline render::FloorModel tabletop_floor(const GeneratorConfig& g) {
  render::FloorModel fl;
  fl.up = {0.0, -std::cos(g.pitch), -std::sin(g.pitch)};
  fl.height = g.camera_height;
  fl.material = {0.3, 0.6, 0.05, 20.0, {0.75, 0.7, 0.65}};
  fl.pattern = {true, {0.45, 0.42, 0.4}, 0.08};
  return fl;
}

/// Where the optical axis meets the floor.
inline Vec3d view_center(const render::FloorModel& fl) {
  return Vec3d{0.0, 0.0, fl.height / -dot(fl.up, Vec3d{0.0, 0.0, 1.0})};
}

inline Frame object_frame(const ObjectSpec& o, const render::FloorModel& fl) {
  return floor_frame(o.center, fl.up, fl.axis_u(), o.yaw);
}

inline render::SceneObject to_object(const ObjectSpec& o, const render::FloorModel& fl) {
  render::SceneObject so;
  const Vec3d* rgb = nullptr;
  for (const auto& c : clevr_colors())
    if (o.color == c.name) rgb = &c.rgb;
  if (!rgb) throw InvalidInput("unknown color '" + o.color + "'");
  so.material = preset_material(o.material, *rgb);
  switch (o.shape) {
    case Shape::Sphere: {
      const double r = o.size / 2.0;
      so.shape = render::Sphere{o.center, {r, r, r}};
      break;
    }
    case Shape::Cube: so.shape = cube_mesh(object_frame(o, fl), o.size); break;
    case Shape::Cylinder: so.shape = cylinder_mesh(object_frame(o, fl), o.size / 2.0, o.size); break;
  }
  return so;
}

inline render::SceneModel to_scene(const SceneSpec& spec) {
  render::SceneModel s;
  s.intrinsics = spec.intrinsics;
  s.floor = spec.floor;
  s.light = spec.light;
  for (const auto& o : spec.objects) s.objects.push_back(to_object(o, spec.floor));
  return s;
}

/// Rendered observation with exact nearest-hit masks.
inline ObservationSet observe(const render::SceneModel& s) {
  const render::RenderOutput out = render::render(s);
  ObservationSet obs;
  obs.rgb = out.rgb;
  obs.depth = out.depth;
  obs.intrinsics = s.intrinsics;
  for (std::size_t k = 0; k < s.objects.size(); ++k) obs.masks.push_back(out.visibility(static_cast<int>(k)));
  return obs;
}

namespace detail {

inline bool in_frustum(const ObjectSpec& o, const CameraIntrinsics& k) {
  const double r = o.bounding_radius();
  for (int a = 0; a < 3; ++a)
    for (double sgn : {-1.0, 1.0}) {
      Vec3d p = o.center;
      p[a] += sgn * r;
      if (!(p.z > 0.0)) return false;
      const Projection q = project(p, k);
      if (q.u < 0.0 || q.u > k.width - 1 || q.v < 0.0 || q.v > k.height - 1) return false;
    }
  return true;
}

/// Every object keeps at least `min_visible` of its own footprint; checked
/// at quarter resolution.
inline bool visible_enough(const SceneSpec& spec, double min_visible) {
  render::SceneModel s = to_scene(spec);
  s.intrinsics = s.intrinsics.scaled(0.25);
  s.floor.enabled = false;
  const render::RenderOutput out = render::render(s);
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    std::size_t own = 0, seen = 0;
    for (std::size_t i = 0; i < out.hit_ids.size(); ++i) {
      own += out.layer_depths[k].data[i] > 0.0;
      seen += out.hit_ids[i] == static_cast<int>(k);
    }
    if (own == 0 || static_cast<double>(seen) < min_visible * static_cast<double>(own)) return false;
  }
  return true;
}

}  // namespace detail

/// Samples a scene spec. `n_objects` of 0 draws the count from the config
/// range. Throws PlacementFailed when no valid layout turns up within the
/// attempt budget.
inline SceneSpec sample_scene(std::uint64_t seed, const GeneratorConfig& g = {}, int n_objects = 0) {
  g.validate();
  if (n_objects < 0 || n_objects > 5) throw InvalidInput("object count must lie within [1, 5]");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  SceneSpec spec;
  spec.seed = seed;
  spec.intrinsics = g.intrinsics;
  spec.floor = tabletop_floor(g);
  const int count = n_objects > 0 ? n_objects : g.min_objects + static_cast<int>(pick(g.max_objects - g.min_objects + 1));
  const Vec3d c0 = view_center(spec.floor);
  const Vec3d eu = spec.floor.axis_u(), ev = spec.floor.axis_v();
  spec.light.position = c0 + spec.floor.up * uniform(0.5, 0.8) + eu * uniform(-0.3, 0.3) + ev * uniform(-0.3, 0.3);
  spec.light.intensity = uniform(1.0, 1.5);

  const auto& colors = clevr_colors();
  for (int attempt = 0; attempt < g.max_attempts; ++attempt) {
    spec.objects.clear();
    bool ok = true;
    for (int k = 0; k < count && ok; ++k) {
      ObjectSpec o;
      o.shape = g.shapes[pick(g.shapes.size())];
      o.size = g.sizes[pick(g.sizes.size())];
      o.material = pick(2) == 0 ? MaterialPreset::Rubber : MaterialPreset::Metal;
      o.color = colors[pick(colors.size())].name;
      o.yaw = uniform(0.0, 2.0 * std::numbers::pi);
      o.center = c0 + eu * uniform(-g.spread_u, g.spread_u) + ev * uniform(-g.spread_v, g.spread_v) +
                 spec.floor.up * (o.size / 2.0);
      ok = detail::in_frustum(o, spec.intrinsics);
      for (const auto& other : spec.objects)
        ok = ok && norm(o.center - other.center) >= o.bounding_radius() + other.bounding_radius() + g.gap;
      spec.objects.push_back(o);
    }
    if (ok && detail::visible_enough(spec, g.min_visible)) return spec;
  }
  throw PlacementFailed();
}

struct GeneratedScene {
  SceneSpec spec;
  render::SceneModel scene;
  ObservationSet obs;
};

inline GeneratedScene generate_scene(std::uint64_t seed, const GeneratorConfig& g = {}, int n_objects = 0) {
  GeneratedScene r;
  r.spec = sample_scene(seed, g, n_objects);
  r.scene = to_scene(r.spec);
  r.obs = observe(r.scene);
  return r;
}

inline void to_json(json& j, const ObjectSpec& o) {
  j = {{"shape", to_string(o.shape)}, {"size", o.size}, {"material", to_string(o.material)},
       {"color", o.color},            {"center", o.center}, {"yaw", o.yaw}};
}

inline void from_json(const json& j, ObjectSpec& o) {
  o.shape = shape_from_string(j.at("shape").get<std::string>());
  o.size = j.at("size").get<double>();
  o.material = material_from_string(j.at("material").get<std::string>());
  o.color = j.at("color").get<std::string>();
  o.center = j.at("center").get<Vec3d>();
  o.yaw = j.value("yaw", 0.0);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneSpec, objects, light, floor, intrinsics, seed)

}  // namespace scenefit::pipeline
