#pragma once

#include <cmath>
#include <variant>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"
#include "scenefit/render/mesh.hpp"

namespace scenefit::render {

inline constexpr double kDefaultMaxShininess = 200.0;

struct Material {
  double ambient = 0.1;
  double diffuse = 0.1;
  double specular = 0.1;
  double shininess = 100.0;
  Vec3d color{0.5, 0.5, 0.5};

  static constexpr int kSize = 7;  // flat layout: ambient, diffuse, specular, shininess, rgb

  void validate(double max_shininess = kDefaultMaxShininess) const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(ambient) || !unit(diffuse) || !unit(specular) || !unit(color.x) || !unit(color.y) ||
        !unit(color.z))
      throw InvalidInput("material coefficients must lie in [0, 1]");
    if (!(shininess >= 1.0 && shininess <= max_shininess)) throw InvalidInput("shininess out of range");
  }
};

struct Light {
  Vec3d position{0.0, -1.0, 0.0};
  double intensity = 1.0;
};

struct FloorPattern {
  bool checker = true;
  Vec3d color_b{0.3, 0.3, 0.3};
  double cell_size = 0.1;
};

/// Plane dot(up, x) = -height in camera coordinates (the camera sits
/// `height` meters above it).
struct FloorModel {
  bool enabled = true;
  Vec3d up{0.0, -1.0, 0.0};
  double height = 0.5;
  Material material;
  FloorPattern pattern;
  /// Rays travelling further than this miss the floor.
  double max_distance = 10.0;

  /// In-plane axes used by the checker pattern.
  Vec3d axis_u() const { return normalized(Vec3d{1.0, 0.0, 0.0} - up * up.x); }
  Vec3d axis_v() const { return cross(up, axis_u()); }
  Vec3d origin() const { return up * -height; }
};

struct Sphere {
  Vec3d center;
  Vec3d radii{0.05, 0.05, 0.05};
};

struct SceneObject {
  std::variant<Sphere, TriMesh> shape;
  Material material;

  bool is_sphere() const { return std::holds_alternative<Sphere>(shape); }
  const Sphere& sphere() const { return std::get<Sphere>(shape); }
  Sphere& sphere() { return std::get<Sphere>(shape); }
  const TriMesh& mesh() const { return std::get<TriMesh>(shape); }
  TriMesh& mesh() { return std::get<TriMesh>(shape); }
};

struct SceneModel {
  std::vector<SceneObject> objects;
  FloorModel floor;
  Light light;
  CameraIntrinsics intrinsics;

  void validate() const {
    intrinsics.validate();
    if (!(light.intensity >= 0.0)) throw InvalidInput("light intensity must be non-negative");
    if (floor.enabled && !(floor.pattern.cell_size > 0.0)) throw InvalidInput("floor cell size must be positive");
    for (const auto& o : objects) {
      if (o.is_sphere()) {
        const Vec3d r = o.sphere().radii;
        if (!(r.x > 0 && r.y > 0 && r.z > 0)) throw InvalidInput("sphere radii must be positive");
      } else {
        o.mesh().validate();
      }
    }
  }
};

struct SoftMaskConfig {
  double d_min = 0.05;
  double d_max = 3.0;
  double background = -10.0;
  double steepness = 50.0;
  double valid_eps = 1e-6;

  void validate() const {
    if (!(d_min < d_max)) throw InvalidInput("soft mask needs d_min < d_max");
    if (!(background < 0.0)) throw InvalidInput("soft mask background constant must be negative");
    if (!(steepness > 0.0)) throw InvalidInput("soft mask steepness must be positive");
  }
};

struct RenderConfig {
  SoftMaskConfig soft_mask;
  double t_eps = 1e-6;
  /// Screen-space triangle binning; results are identical with it off.
  bool binning = true;
};

}  // namespace scenefit::render
