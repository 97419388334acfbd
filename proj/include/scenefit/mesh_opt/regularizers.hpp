#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "scenefit/camera/image.hpp"
#include "scenefit/diff/math.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"
#include "scenefit/render/mesh.hpp"

namespace scenefit::mesh_opt {

/// (1/N) Σ_i ‖v_i − mean(neighbours(v_i))‖² with uniform weights. `grad`
/// (optional, one entry per vertex) receives dL/dv.
inline double laplacian_loss(std::span<const Vec3d> v, const std::vector<std::vector<int>>& neighbors,
                             std::span<Vec3d> grad = {}) {
  if (v.size() < 4) throw InvalidInput("laplacian loss needs at least 4 vertices");
  if (neighbors.size() != v.size()) throw InvalidInput("neighbour lists do not match the vertices");
  const double inv_n = 1.0 / static_cast<double>(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& nb = neighbors[i];
    if (nb.empty()) throw IsolatedVertex(i);
    Vec3d mean;
    for (int j : nb) mean += v[j];
    const double inv_k = 1.0 / static_cast<double>(nb.size());
    const Vec3d delta = v[i] - mean * inv_k;
    s += dot(delta, delta);
    if (!grad.empty()) {
      const Vec3d g = delta * (2.0 * inv_n);
      grad[i] += g;
      for (int j : nb) grad[j] -= g * inv_k;
    }
  }
  return s * inv_n;
}

inline double laplacian_loss(const TriMesh& m) { return laplacian_loss(m.vertices, vertex_neighbors(m)); }

/// Edge-aware smoothness of inverse depth g = 1/(D + eps):
/// mean over pixels of |∂x g| e^{−|∂x I|} + |∂y g| e^{−|∂y I|} with forward
/// differences and channel-mean absolute image differences. With a mask,
/// only pairs whose pixels are both masked and have depth > 0 count and the
/// mean runs over masked pixels. `grad` (optional, one per pixel) receives
/// dL/dD.
inline double disparity_smoothness(const ImageD& depth, const ImageD& image, double eps = 1e-3,
                                   const Mask* mask = nullptr, std::span<double> grad = {}) {
  const int w = depth.width, h = depth.height;
  if (!image.same_shape(w, h) || depth.channels != 1) throw InvalidInput("disparity smoothness shape mismatch");
  std::size_t n = depth.pixels();
  if (mask != nullptr) {
    if (!mask->same_shape(w, h)) throw InvalidInput("disparity smoothness mask shape mismatch");
    n = 0;
    for (auto m : mask->data) n += m != 0;
  }
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  const int ch = image.channels;
  auto usable = [&](std::size_t i) { return mask == nullptr || (mask->data[i] != 0 && depth.data[i] > 0.0); };
  auto image_diff = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (int c = 0; c < ch; ++c) s += std::fabs(image.data[a * ch + c] - image.data[b * ch + c]);
    return s / ch;
  };
  double total = 0.0;
  auto pair = [&](std::size_t a, std::size_t b) {
    if (!usable(a) || !usable(b)) return;
    const double ga = 1.0 / (depth.data[a] + eps), gb = 1.0 / (depth.data[b] + eps);
    const double edge = std::exp(-image_diff(a, b));
    total += diff::smooth_abs(ga - gb) * edge;
    if (!grad.empty()) {
      const double dd = diff::smooth_abs_derivative(ga - gb) * edge * inv_n;
      grad[a] += dd * -ga * ga;
      grad[b] -= dd * -gb * gb;
    }
  };
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col) {
      const std::size_t i = pixel_index(col, row, w);
      if (col + 1 < w) pair(i, i + 1);
      if (row + 1 < h) pair(i, i + static_cast<std::size_t>(w));
    }
  return total * inv_n;
}

/// |Σ_faces det(v0, v1, v2)| / 6. `boundary_edges` (optional) reports edges
/// used by one face; the value is meaningless for an open mesh.
inline double mesh_volume(const TriMesh& m, std::size_t* boundary_edges = nullptr) {
  if (boundary_edges != nullptr) *boundary_edges = boundary_edge_count(m);
  return std::fabs(signed_volume(m.vertices, m.faces));
}

/// d|V|/dv accumulated into grad (one per vertex).
inline void mesh_volume_gradient(std::span<const Vec3d> v, const std::vector<Face>& faces, std::span<Vec3d> grad,
                                 double scale = 1.0) {
  const double sign = signed_volume(std::vector<Vec3d>(v.begin(), v.end()), faces) < 0.0 ? -1.0 : 1.0;
  const double k = sign * scale / 6.0;
  for (const auto& f : faces) {
    grad[f[0]] += cross(v[f[1]], v[f[2]]) * k;
    grad[f[1]] += cross(v[f[2]], v[f[0]]) * k;
    grad[f[2]] += cross(v[f[0]], v[f[1]]) * k;
  }
}

/// |V^s − V^m|².
inline double volume_loss(double v_sphere, double v_mesh) {
  if (!(v_sphere >= 0.0 && v_mesh >= 0.0)) throw InvalidInput("volumes must be non-negative");
  const double d = v_sphere - v_mesh;
  return d * d;
}

}  // namespace scenefit::mesh_opt
