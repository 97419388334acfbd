#pragma once

// Control cages and 3D mean value coordinates for closed triangle cages
// (Ju, Schaefer, Warren 2005).

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"
#include "scenefit/render/mesh.hpp"
#include "scenefit/render/scene.hpp"

namespace scenefit::mesh_opt {

struct Cage {
  std::vector<Vec3d> vertices;
  std::vector<Face> faces;
  std::vector<Vec3d> rest_vertices;

  void validate() const {
    if (vertices.size() < 8) throw InvalidInput("cage needs at least 8 vertices");
    if (rest_vertices.size() != vertices.size()) throw InvalidInput("cage rest pose does not match its vertices");
    TriMesh m{vertices, faces};
    m.validate();
    if (boundary_edge_count(m) != 0) throw InvalidInput("cage surface is not closed");
  }
};

/// Icosphere cage around a sphere, `inflation` times its radii.
inline Cage make_cage(const render::Sphere& s, int level = 1, double inflation = 1.3) {
  if (!(inflation > 1.0)) throw InvalidInput("cage inflation must exceed 1");
  const TriMesh ico = icosphere(level);
  Cage c;
  c.faces = ico.faces;
  for (const auto& v : ico.vertices) c.vertices.push_back(s.center + hadamard(s.radii, v) * inflation);
  c.rest_vertices = c.vertices;
  return c;
}

/// Axis-aligned cube cage with corners at center ± half; two triangles per
/// side, outward.
inline Cage cube_cage(const Vec3d& center, double half) {
  Cage c;
  for (int i = 0; i < 8; ++i)
    c.vertices.push_back(center + Vec3d{(i & 1) ? half : -half, (i & 2) ? half : -half, (i & 4) ? half : -half});
  c.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  c.rest_vertices = c.vertices;
  return c;
}

/// Cube cage with a vertex at every face centre (vertices 8..13) and four
/// triangles per side; invariant under the cube's symmetries.
inline Cage symmetric_cube_cage(const Vec3d& center, double half) {
  const Cage base = cube_cage(center, half);
  Cage c;
  c.vertices = base.vertices;
  for (std::size_t f = 0; f < base.faces.size(); f += 2) {
    const Face& a = base.faces[f];
    const Face& b = base.faces[f + 1];
    // The two triangles of a side share its diagonal a[0]-a[2]; the quad runs a0, a1, a2, b2.
    const std::array<int, 4> quad{a[0], a[1], a[2], b[2]};
    Vec3d mid;
    for (int q : quad) mid += base.vertices[q];
    c.vertices.push_back(mid * 0.25);
    const int m = static_cast<int>(c.vertices.size()) - 1;
    for (int i = 0; i < 4; ++i) c.faces.push_back({quad[i], quad[(i + 1) % 4], m});
  }
  c.rest_vertices = c.vertices;
  return c;
}

/// Generalized winding number of a closed surface around x (±1 inside, 0
/// outside).
inline double winding_number(const Vec3d& x, std::span<const Vec3d> v, const std::vector<Face>& faces) {
  double total = 0.0;
  for (const auto& f : faces) {
    const Vec3d a = v[f[0]] - x, b = v[f[1]] - x, c = v[f[2]] - x;
    const double la = norm(a), lb = norm(b), lc = norm(c);
    const double num = dot(a, cross(b, c));
    const double den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

/// Mean value coordinates of x w.r.t. the closed cage (v, faces). Returns an
/// empty vector when x lies on the cage surface.
inline std::vector<double> mean_value_coordinates(const Vec3d& x, std::span<const Vec3d> v,
                                                  const std::vector<Face>& faces) {
  constexpr double kEps = 1e-12;
  const std::size_t n = v.size();
  std::vector<double> d(n);
  std::vector<Vec3d> u(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3d r = v[j] - x;
    d[j] = norm(r);
    if (d[j] < kEps) return {};
    u[j] = r / d[j];
  }
  std::vector<double> w(n, 0.0);
  double total = 0.0;
  for (const auto& f : faces) {
    double th[3], c[3], s[3];
    for (int i = 0; i < 3; ++i) {
      const double l = norm(u[f[(i + 1) % 3]] - u[f[(i + 2) % 3]]);
      th[i] = 2.0 * std::asin(std::min(1.0, 0.5 * l));
    }
    const double h = 0.5 * (th[0] + th[1] + th[2]);
    if (std::numbers::pi - h < kEps) return {};  // x lies inside this triangle
    const double sign = dot(u[f[0]], cross(u[f[1]], u[f[2]])) < 0.0 ? -1.0 : 1.0;
    bool coplanar = false;
    for (int i = 0; i < 3; ++i) {
      c[i] = 2.0 * std::sin(h) * std::sin(h - th[i]) / (std::sin(th[(i + 1) % 3]) * std::sin(th[(i + 2) % 3])) - 1.0;
      s[i] = sign * std::sqrt(std::max(0.0, 1.0 - c[i] * c[i]));
      coplanar = coplanar || std::fabs(s[i]) <= kEps;
    }
    // x in the triangle's plane but outside it: no contribution.
    if (coplanar) continue;
    for (int i = 0; i < 3; ++i) {
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
      const double wi = (th[i] - c[i1] * th[i2] - c[i2] * th[i1]) / (d[f[i]] * std::sin(th[i1]) * s[i2]);
      w[f[i]] += wi;
      total += wi;
    }
  }
  for (auto& wi : w) wi /= total;
  return w;
}

/// Row-major N×N_c weight matrix, fixed after construction.
struct MvcWeights {
  std::size_t rows = 0, cols = 0;
  std::vector<double> w;

  double at(std::size_t i, std::size_t j) const { return w[i * cols + j]; }
  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += at(i, j);
    return s;
  }
};

/// MVC of every mesh vertex w.r.t. the rest cage. Throws VertexOutsideCage
/// for a vertex on or outside the cage surface.
inline MvcWeights mvc_weights(std::span<const Vec3d> mesh_vertices, const Cage& cage) {
  cage.validate();
  MvcWeights mw;
  mw.rows = mesh_vertices.size();
  mw.cols = cage.rest_vertices.size();
  mw.w.reserve(mw.rows * mw.cols);
  for (std::size_t i = 0; i < mesh_vertices.size(); ++i) {
    const Vec3d& x = mesh_vertices[i];
    if (std::fabs(winding_number(x, cage.rest_vertices, cage.faces)) < 0.5) throw VertexOutsideCage(i);
    const std::vector<double> row = mean_value_coordinates(x, cage.rest_vertices, cage.faces);
    if (row.empty()) throw VertexOutsideCage(i);
    mw.w.insert(mw.w.end(), row.begin(), row.end());
  }
  return mw;
}

/// V' = W θ.
inline std::vector<Vec3d> deform(const MvcWeights& mw, std::span<const Vec3d> cage_vertices) {
  if (cage_vertices.size() != mw.cols) throw InvalidInput("cage vertex count does not match the weights");
  std::vector<Vec3d> out(mw.rows);
  for (std::size_t i = 0; i < mw.rows; ++i) {
    Vec3d p;
    for (std::size_t j = 0; j < mw.cols; ++j) p += cage_vertices[j] * mw.at(i, j);
    out[i] = p;
  }
  return out;
}

/// dL/dθ = Wᵀ dL/dV.
inline std::vector<Vec3d> deform_pullback(const MvcWeights& mw, std::span<const Vec3d> grad_vertices) {
  if (grad_vertices.size() != mw.rows) throw InvalidInput("vertex gradient count does not match the weights");
  std::vector<Vec3d> out(mw.cols);
  for (std::size_t i = 0; i < mw.rows; ++i)
    for (std::size_t j = 0; j < mw.cols; ++j) out[j] += grad_vertices[i] * mw.at(i, j);
  return out;
}

/// Faces of the cage that turned inside out relative to its centroid.
inline std::size_t inverted_faces(const Cage& c) {
  const Vec3d o = vertex_centroid(c.vertices), o_rest = vertex_centroid(c.rest_vertices);
  std::size_t n = 0;
  for (const auto& f : c.faces) {
    const double rest = dot(c.rest_vertices[f[0]] - o_rest,
                            cross(c.rest_vertices[f[1]] - c.rest_vertices[f[0]],
                                  c.rest_vertices[f[2]] - c.rest_vertices[f[0]]));
    const double now = dot(c.vertices[f[0]] - o, cross(c.vertices[f[1]] - c.vertices[f[0]],
                                                         c.vertices[f[2]] - c.vertices[f[0]]));
    n += (rest > 0.0) != (now > 0.0);
  }
  return n;
}

}  // namespace scenefit::mesh_opt
