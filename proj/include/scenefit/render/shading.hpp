#pragma once

#include <cmath>

#include "scenefit/diff/math.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/render/scene.hpp"

namespace scenefit::render {

template <class T>
struct MaterialT {
  T ambient, diffuse, specular, shininess;
  Vec3<T> color;
};

template <class T>
struct LightT {
  Vec3<T> position;
  T intensity;
};

inline MaterialT<double> lift_material(const Material& m) {
  return {m.ambient, m.diffuse, m.specular, m.shininess, m.color};
}

inline LightT<double> lift_light(const Light& l) { return {l.position, l.intensity}; }

/// Phong: color * (ambient + I * diffuse * max(0, n.l)) + I * specular * max(0, r.v)^shininess,
/// r = 2 (n.l) n - l, clamped per channel to [0, 1]. `view` points from the
/// surface toward the eye.
template <class T>
Vec3<T> phong_shade(const Vec3<T>& point, const Vec3<T>& normal, const Vec3d& view, const MaterialT<T>& m,
                    const LightT<T>& light, const Vec3<T>& base_color) {
  const Vec3<T> l = normalized(light.position - point);
  const T nl = dot(normal, l);
  const T lambert = diff::relu(nl);
  const Vec3<T> r = normal * (2.0 * nl) - l;
  const T rv = diff::relu(dot(r, lift<T>(view)));
  const T spec = light.intensity * m.specular * diff::pow_nonneg(rv, m.shininess);
  const T shade = m.ambient + light.intensity * m.diffuse * lambert;
  return {diff::clamp(T(base_color.x * shade + spec), 0.0, 1.0),
          diff::clamp(T(base_color.y * shade + spec), 0.0, 1.0),
          diff::clamp(T(base_color.z * shade + spec), 0.0, 1.0)};
}

/// True where the floor shows its material color, false for pattern color_b.
inline bool checker_primary(const FloorModel& floor, const Vec3d& point) {
  if (!floor.pattern.checker) return true;
  const Vec3d rel = point - floor.origin();
  const double a = std::floor(dot(rel, floor.axis_u()) / floor.pattern.cell_size);
  const double b = std::floor(dot(rel, floor.axis_v()) / floor.pattern.cell_size);
  return std::fmod(std::fabs(a + b), 2.0) == 0.0;
}

/// sigmoid(k * d') with d' = (d_max - d) / (d_max - d_min) - 0.5 for d > eps,
/// else the background constant.
template <class T>
T soft_mask_value(const T& depth, const SoftMaskConfig& c) {
  const T dn = diff::value_of(depth) > c.valid_eps ? T((c.d_max - depth) / (c.d_max - c.d_min) - 0.5)
                                                   : T(c.background);
  return diff::sigmoid(dn * c.steepness);
}

}  // namespace scenefit::render
