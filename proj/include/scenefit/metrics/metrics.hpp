#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"
#include "scenefit/render/mesh.hpp"
#include "scenefit/render/renderer.hpp"
#include "scenefit/render/scene.hpp"

namespace scenefit::metrics {

namespace detail {

/// Squared distance from every point of a to its nearest point of b.
inline std::vector<double> nearest_squared(std::span<const Vec3d> a, std::span<const Vec3d> b) {
  std::vector<double> out(a.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const Vec3d d = a[i] - q;
      best = std::min(best, dot(d, d));
    }
    out[i] = best;
  }
  return out;
}

}  // namespace detail

/// mean_a min_b ‖a−b‖² + mean_b min_a ‖a−b‖².
inline double chamfer(std::span<const Vec3d> a, std::span<const Vec3d> b) {
  if (a.empty() || b.empty()) throw EmptyCloud();
  double sa = 0.0, sb = 0.0;
  for (double v : detail::nearest_squared(a, b)) sa += v;
  for (double v : detail::nearest_squared(b, a)) sb += v;
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

/// max of the two directed Hausdorff distances, unsquared.
inline double hausdorff(std::span<const Vec3d> a, std::span<const Vec3d> b) {
  if (a.empty() || b.empty()) throw EmptyCloud();
  double m = 0.0;
  for (double v : detail::nearest_squared(a, b)) m = std::max(m, v);
  for (double v : detail::nearest_squared(b, a)) m = std::max(m, v);
  return std::sqrt(m);
}

/// Area-uniform surface samples of a mesh; deterministic for a seed.
inline std::vector<Vec3d> sample_surface(const TriMesh& m, std::size_t n, std::uint64_t seed) {
  if (m.faces.empty()) throw InvalidInput("cannot sample a mesh without faces");
  std::vector<double> cum;
  cum.reserve(m.faces.size());
  double total = 0.0;
  for (const auto& f : m.faces) {
    total += 0.5 * norm(cross(m.vertices[f[1]] - m.vertices[f[0]], m.vertices[f[2]] - m.vertices[f[0]]));
    cum.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidInput("mesh has zero surface area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3d> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = u(rng) * total;
    const auto it = std::upper_bound(cum.begin(), cum.end(), pick);
    const Face& f = m.faces[std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), m.faces.size() - 1)];
    double r1 = u(rng), r2 = u(rng);
    if (r1 + r2 > 1.0) r1 = 1.0 - r1, r2 = 1.0 - r2;
    const Vec3d& a = m.vertices[f[0]];
    out.push_back(a + (m.vertices[f[1]] - a) * r1 + (m.vertices[f[2]] - a) * r2);
  }
  return out;
}

/// Triangulated ellipsoid surface of a sphere primitive.
inline TriMesh sphere_to_mesh(const render::Sphere& s, int level = 4) {
  TriMesh m = icosphere(level);
  for (auto& v : m.vertices) v = s.center + hadamard(s.radii, v);
  return m;
}

inline TriMesh object_mesh(const render::SceneObject& o) {
  return o.is_sphere() ? sphere_to_mesh(o.sphere()) : o.mesh();
}

/// Largest vertex-to-vertex distance.
inline double diameter(std::span<const Vec3d> v) {
  double m = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) m = std::max(m, norm(v[i] - v[j]));
  return m;
}

/// |a∩b| / |a∪b|, 1 when both are empty.
inline double mask_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidInput("mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct VsdConfig {
  /// Fractions of the ground-truth object diameter.
  std::vector<double> tau_fractions{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50};
  double theta = 0.3;
};

/// Object depth and visibility (nearest hit) in a rendered scene.
struct VisibleSurface {
  ImageD depth;
  Mask visible;
};

inline VisibleSurface visible_surface(const render::SceneModel& scene, int k) {
  render::RenderOutput out;
  try {
    out = render::render(scene);
  } catch (const InvalidInput& e) {
    throw NotRenderable(e.what());
  }
  return {out.depth, out.visibility(k)};
}

/// VSD error for one tolerance: mean over the union of visibilities of
/// [not both visible or |d_est − d_gt| ≥ tau]. 1 when the union is empty.
inline double vsd_error(const VisibleSurface& est, const VisibleSurface& gt, double tau) {
  std::size_t uni = 0, bad = 0;
  for (std::size_t i = 0; i < gt.visible.data.size(); ++i) {
    const bool e = est.visible.data[i] != 0, g = gt.visible.data[i] != 0;
    if (!e && !g) continue;
    ++uni;
    bad += !(e && g && std::fabs(est.depth.data[i] - gt.depth.data[i]) < tau);
  }
  return uni == 0 ? 1.0 : static_cast<double>(bad) / static_cast<double>(uni);
}

/// Average recall over the tolerance sweep for surfaces already extracted;
/// tolerances are fractions of `diameter`.
inline double vsd_recall(const VisibleSurface& est, const VisibleSurface& gt, double diameter,
                         const VsdConfig& cfg = {}) {
  if (cfg.tau_fractions.empty()) throw InvalidInput("VSD needs at least one tolerance");
  int hits = 0;
  for (double f : cfg.tau_fractions) hits += vsd_error(est, gt, f * diameter) < cfg.theta;
  return static_cast<double>(hits) / static_cast<double>(cfg.tau_fractions.size());
}

/// Average recall of object k over the tolerance sweep: each scene is
/// rendered in full and the object's nearest-hit pixels are compared.
inline double vsd_recall(const render::SceneModel& est_scene, const render::SceneModel& gt_scene, int k,
                         const VsdConfig& cfg = {}) {
  return vsd_recall(visible_surface(est_scene, k), visible_surface(gt_scene, k),
                    diameter(object_mesh(gt_scene.objects[k]).vertices), cfg);
}

/// Per-object metrics; chamfer_e3 is the squared Chamfer ×10³.
struct MetricReport {
  double chamfer_e3 = 0.0;
  double hausdorff = 0.0;  // meters
  double ar_vsd = 0.0;
  double iou = 0.0;
};

}  // namespace scenefit::metrics
