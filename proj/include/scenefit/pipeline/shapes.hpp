#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"
#include "scenefit/render/mesh.hpp"

namespace scenefit::pipeline {

enum class Shape { Sphere, Cube, Cylinder };

inline std::string to_string(Shape s) {
  switch (s) {
    case Shape::Sphere: return "sphere";
    case Shape::Cube: return "cube";
    case Shape::Cylinder: return "cylinder";
  }
  return "sphere";
}

inline Shape shape_from_string(const std::string& s) {
  if (s == "sphere") return Shape::Sphere;
  if (s == "cube") return Shape::Cube;
  if (s == "cylinder") return Shape::Cylinder;
  throw InvalidInput("unknown shape '" + s + "'");
}

/// Orthonormal object frame; ez is the object's up axis.
struct Frame {
  Vec3d origin, ex{1, 0, 0}, ey{0, 1, 0}, ez{0, 0, 1};

  Vec3d to_world(const Vec3d& p) const { return origin + ex * p.x + ey * p.y + ez * p.z; }
};

/// Frame standing on a floor with normal `up`, rotated by `yaw` about it.
inline Frame floor_frame(const Vec3d& origin, const Vec3d& up, const Vec3d& floor_u, double yaw) {
  const Vec3d v = cross(up, floor_u);
  Frame f;
  f.origin = origin;
  f.ex = floor_u * std::cos(yaw) + v * std::sin(yaw);
  f.ey = cross(up, f.ex);
  f.ez = up;
  return f;
}

/// Cube of the given side centred on the frame origin, outward faces.
inline TriMesh cube_mesh(const Frame& fr, double side) {
  TriMesh m;
  const double h = side / 2.0;
  for (int i = 0; i < 8; ++i) m.vertices.push_back(fr.to_world({(i & 1) ? h : -h, (i & 2) ? h : -h, (i & 4) ? h : -h}));
  m.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

/// Closed cylinder along the frame's z axis centred on the origin.
inline TriMesh cylinder_mesh(const Frame& fr, double radius, double height, int segments = 32) {
  if (segments < 3) throw InvalidInput("cylinder needs at least 3 segments");
  TriMesh m;
  const double h = height / 2.0;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    const double x = radius * std::cos(a), y = radius * std::sin(a);
    m.vertices.push_back(fr.to_world({x, y, -h}));
    m.vertices.push_back(fr.to_world({x, y, h}));
  }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.push_back(fr.to_world({0, 0, -h}));
  m.vertices.push_back(fr.to_world({0, 0, h}));
  const int top = bottom + 1;
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.faces.push_back({b0, b1, t1});
    m.faces.push_back({b0, t1, t0});
    m.faces.push_back({bottom, b1, b0});
    m.faces.push_back({top, t0, t1});
  }
  return m;
}

}  // namespace scenefit::pipeline
