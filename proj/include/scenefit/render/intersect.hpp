#pragma once

// Ray-primitive intersection, templated so the same arithmetic serves the
// double search and the differentiable recomputation of the chosen hit.

#include <cmath>
#include <optional>

#include "scenefit/diff/math.hpp"
#include "scenefit/diff/vec3.hpp"

namespace scenefit::render {

inline constexpr double kMinTriangleArea = 1e-12;

template <class T>
struct SphereHit {
  T t;
  Vec3<T> normal;
};

/// Nearest t > t_eps on the axis-aligned ellipsoid |(x - c) / r| = 1. The
/// normal is the normalized gradient (x - c) / r^2.
template <class T>
std::optional<SphereHit<T>> ray_sphere_intersect(const Vec3d& origin, const Vec3d& dir, const Vec3<T>& center,
                                                 const Vec3<T>& radii, double t_eps = 1e-6) {
  const Vec3<T> o = divide(lift<T>(origin) - center, radii);
  const Vec3<T> d = divide(lift<T>(dir), radii);
  const T a = dot(d, d);
  const T b = 2.0 * dot(o, d);
  const T c = dot(o, o) - 1.0;
  const T disc = b * b - 4.0 * a * c;
  if (diff::value_of(disc) < 0.0) return std::nullopt;
  const T sq = diff::sqrt(disc);
  T t = (-b - sq) / (2.0 * a);
  if (!(diff::value_of(t) > t_eps)) {
    t = (-b + sq) / (2.0 * a);
    if (!(diff::value_of(t) > t_eps)) return std::nullopt;
  }
  const Vec3<T> x = lift<T>(origin) + lift<T>(dir) * t;
  const Vec3<T> g = divide(divide(x - center, radii), radii);
  return SphereHit<T>{t, normalized(g)};
}

template <class T>
struct TriangleHit {
  T t;
  T b1, b2;  // barycentrics of v1 and v2; v0 gets 1 - b1 - b2
};

/// Moller-Trumbore on an edge representation (v0, e1 = v1 - v0, e2 = v2 - v0).
/// `area2` = |e1 x e2| is used only to reject rays parallel to the plane.
template <class T>
std::optional<TriangleHit<T>> ray_triangle_edges(const Vec3d& origin, const Vec3d& dir, const Vec3<T>& v0,
                                                 const Vec3<T>& e1, const Vec3<T>& e2, double area2,
                                                 double t_eps) {
  const Vec3<T> p = cross(lift<T>(dir), e2);
  const T det = dot(e1, p);
  if (!(std::fabs(diff::value_of(det)) > 1e-12 * area2)) return std::nullopt;
  const T inv = 1.0 / det;
  const Vec3<T> s = lift<T>(origin) - v0;
  const T u = dot(s, p) * inv;
  if (diff::value_of(u) < 0.0 || diff::value_of(u) > 1.0) return std::nullopt;
  const Vec3<T> q = cross(s, e1);
  const T v = dot(lift<T>(dir), q) * inv;
  if (diff::value_of(v) < 0.0 || diff::value_of(u) + diff::value_of(v) > 1.0) return std::nullopt;
  const T t = dot(e2, q) * inv;
  if (!(diff::value_of(t) > t_eps)) return std::nullopt;
  return TriangleHit<T>{t, u, v};
}

/// Double-sided ray/triangle test; degenerate triangles never hit.
template <class T>
std::optional<TriangleHit<T>> ray_triangle_intersect(const Vec3d& origin, const Vec3d& dir, const Vec3<T>& v0,
                                                     const Vec3<T>& v1, const Vec3<T>& v2, double t_eps = 1e-6) {
  const Vec3<T> e1 = v1 - v0, e2 = v2 - v0;
  const double area2 = norm(cross(value_of(e1), value_of(e2)));
  if (0.5 * area2 < kMinTriangleArea) return std::nullopt;
  return ray_triangle_edges(origin, dir, v0, e1, e2, area2, t_eps);
}

/// Unit geometric normal of (v0, v1, v2), flipped to face against `dir`.
template <class T>
Vec3<T> facing_normal(const Vec3<T>& e1, const Vec3<T>& e2, const Vec3d& dir) {
  Vec3<T> n = normalized(cross(e1, e2));
  if (dot(value_of(n), dir) > 0.0) n = -n;
  return n;
}

/// Ray/plane dot(up, x) = -height; hits beyond max_distance are dropped.
inline std::optional<double> ray_floor_intersect(const Vec3d& origin, const Vec3d& dir, const Vec3d& up,
                                                 double height, double max_distance, double t_eps = 1e-6) {
  const double denom = dot(up, dir);
  if (denom == 0.0) return std::nullopt;
  const double t = (-height - dot(up, origin)) / denom;
  if (!(t > t_eps) || t > max_distance) return std::nullopt;
  return t;
}

}  // namespace scenefit::render
