#pragma once

// Ray-traced forward renderer and its vector-Jacobian product.
//
// The forward pass finds, per pixel, the nearest hit of every object (its own
// depth layer) and of the floor in plain doubles. The backward pass replays
// only the chosen primitives on a small per-pixel tape, so the hit search is
// never differentiated. Per-row contributions are reduced in row order, so
// gradients do not depend on the thread count.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/camera/image.hpp"
#include "scenefit/diff/math.hpp"
#include "scenefit/diff/tape.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/render/intersect.hpp"
#include "scenefit/render/scene.hpp"
#include "scenefit/render/shading.hpp"

namespace scenefit::render {

inline constexpr int kHitNone = -1;
inline constexpr int kHitFloor = -2;

struct RenderOutput {
  int width = 0, height = 0;
  ImageD rgb;    // 3 channels
  ImageD depth;  // camera-space z, 0 where nothing is hit
  std::vector<ImageD> soft_masks;    // one per object, from its own layer
  std::vector<ImageD> layer_depths;  // one per object, ignoring the others
  std::vector<int> hit_ids;          // object index, kHitFloor or kHitNone
  // Primitive bookkeeping for the backward pass: triangle index (0 for
  // spheres) of the composite hit and of every object layer, -1 for none.
  std::vector<int> hit_prims;
  std::vector<std::vector<int>> layer_prims;

  /// Pixels where object k is the nearest hit.
  Mask visibility(int k) const {
    Mask m(width, height, 1, 0);
    for (std::size_t i = 0; i < hit_ids.size(); ++i) m.data[i] = hit_ids[i] == k;
    return m;
  }
};

/// Flat layout of the differentiable scene parameters:
/// light position (3), light intensity, floor material (7), floor pattern
/// color (3), then per object its material (7) followed by its geometry
/// (sphere: center 3 + radii 3; mesh: 3 per vertex).
class ParamIndex {
 public:
  static constexpr std::size_t kLightPosition = 0;
  static constexpr std::size_t kLightIntensity = 3;
  static constexpr std::size_t kFloorMaterial = 4;
  static constexpr std::size_t kFloorPattern = 11;
  static constexpr std::size_t kGlobalCount = 14;

  explicit ParamIndex(const SceneModel& s) {
    std::size_t off = kGlobalCount;
    for (const auto& o : s.objects) {
      material_.push_back(off);
      off += Material::kSize;
      geometry_.push_back(off);
      off += o.is_sphere() ? 6 : 3 * o.mesh().vertices.size();
    }
    total_ = off;
  }

  std::size_t material(int k) const { return material_[k]; }
  std::size_t geometry(int k) const { return geometry_[k]; }
  std::size_t total() const { return total_; }

 private:
  std::vector<std::size_t> material_, geometry_;
  std::size_t total_ = kGlobalCount;
};

struct GradientRequest {
  bool light = true;
  bool floor = true;
  bool materials = true;
  bool geometry = true;
};

/// Output adjoints (dL/d output). Empty vectors mean zero.
struct RenderAdjoint {
  std::vector<double> rgb;    // 3 per pixel
  std::vector<double> depth;  // 1 per pixel
  std::vector<std::vector<double>> masks;
};

namespace detail {

inline constexpr int kTile = 8;

struct TriData {
  Vec3d v0, e1, e2;
  double area2 = 0.0;
  bool degenerate = true;
};

struct ObjectAccel {
  bool sphere = false;
  int col0 = 0, col1 = -1, row0 = 0, row1 = -1;  // inclusive pixel bbox
  std::vector<TriData> tris;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> bins;  // ascending triangle indices per tile
  bool brute_force = false;
};

struct PixelBox {
  int col0, col1, row0, row1;
  bool empty() const { return col1 < col0 || row1 < row0; }
};

/// Conservative pixel bbox of points in front of the camera, or the full
/// frame if any point is near or behind the image plane.
inline PixelBox project_bbox(std::span<const Vec3d> pts, const CameraIntrinsics& k) {
  const PixelBox full{0, k.width - 1, 0, k.height - 1};
  double u0 = std::numeric_limits<double>::infinity(), u1 = -u0, v0 = u0, v1 = -u0;
  for (const auto& p : pts) {
    if (!(p.z > 1e-6)) return full;
    const Projection q = project(p, k);
    u0 = std::min(u0, q.u);
    u1 = std::max(u1, q.u);
    v0 = std::min(v0, q.v);
    v1 = std::max(v1, q.v);
  }
  auto lo = [](double x, int n) { return static_cast<int>(std::clamp(std::ceil(x) - 1.0, 0.0, double(n))); };
  auto hi = [](double x, int n) { return static_cast<int>(std::clamp(std::floor(x) + 1.0, -1.0, double(n - 1))); };
  return {lo(u0, k.width), hi(u1, k.width), lo(v0, k.height), hi(v1, k.height)};
}

inline ObjectAccel build_accel(const SceneObject& obj, const CameraIntrinsics& k, bool binning) {
  ObjectAccel a;
  if (obj.is_sphere()) {
    a.sphere = true;
    const Sphere& s = obj.sphere();
    std::vector<Vec3d> corners;
    for (int i = 0; i < 8; ++i)
      corners.push_back(s.center + Vec3d{(i & 1) ? s.radii.x : -s.radii.x, (i & 2) ? s.radii.y : -s.radii.y,
                                         (i & 4) ? s.radii.z : -s.radii.z});
    const PixelBox b = project_bbox(corners, k);
    a.col0 = b.col0, a.col1 = b.col1, a.row0 = b.row0, a.row1 = b.row1;
    return a;
  }
  const TriMesh& m = obj.mesh();
  a.tris.resize(m.faces.size());
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    TriData& t = a.tris[f];
    t.v0 = m.vertices[m.faces[f][0]];
    t.e1 = m.vertices[m.faces[f][1]] - t.v0;
    t.e2 = m.vertices[m.faces[f][2]] - t.v0;
    t.area2 = norm(cross(t.e1, t.e2));
    t.degenerate = 0.5 * t.area2 < kMinTriangleArea;
  }
  a.tiles_x = (k.width + kTile - 1) / kTile;
  a.tiles_y = (k.height + kTile - 1) / kTile;
  a.bins.assign(static_cast<std::size_t>(a.tiles_x) * a.tiles_y, {});
  a.brute_force = !binning;
  a.col0 = k.width, a.col1 = -1, a.row0 = k.height, a.row1 = -1;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    if (a.tris[f].degenerate) continue;
    const Vec3d pts[3] = {m.vertices[m.faces[f][0]], m.vertices[m.faces[f][1]], m.vertices[m.faces[f][2]]};
    const PixelBox b = binning ? project_bbox(pts, k) : PixelBox{0, k.width - 1, 0, k.height - 1};
    if (b.empty()) continue;
    a.col0 = std::min(a.col0, b.col0), a.col1 = std::max(a.col1, b.col1);
    a.row0 = std::min(a.row0, b.row0), a.row1 = std::max(a.row1, b.row1);
    for (int ty = b.row0 / kTile; ty <= b.row1 / kTile; ++ty)
      for (int tx = b.col0 / kTile; tx <= b.col1 / kTile; ++tx)
        a.bins[static_cast<std::size_t>(ty) * a.tiles_x + tx].push_back(static_cast<int>(f));
  }
  return a;
}

struct LayerHit {
  double t = std::numeric_limits<double>::infinity();
  int prim = -1;
};

inline LayerHit search_layer(const SceneObject& obj, const ObjectAccel& a, const Vec3d& dir, int col, int row,
                             double t_eps) {
  LayerHit best;
  if (col < a.col0 || col > a.col1 || row < a.row0 || row > a.row1) return best;
  if (a.sphere) {
    const Sphere& s = obj.sphere();
    if (auto h = ray_sphere_intersect<double>({}, dir, s.center, s.radii, t_eps)) best = {h->t, 0};
    return best;
  }
  auto test = [&](int f) {
    const TriData& t = a.tris[f];
    if (t.degenerate) return;
    if (auto h = ray_triangle_edges<double>({}, dir, t.v0, t.e1, t.e2, t.area2, t_eps); h && h->t < best.t)
      best = {h->t, f};
  };
  if (a.brute_force) {
    for (int f = 0; f < static_cast<int>(a.tris.size()); ++f) test(f);
  } else {
    for (int f : a.bins[static_cast<std::size_t>(row / kTile) * a.tiles_x + col / kTile]) test(f);
  }
  return best;
}

/// Scene parameters as plain doubles.
struct ValueParams {
  using T = double;
  const SceneModel& s;
  LightT<double> light() const { return lift_light(s.light); }
  MaterialT<double> floor_material() const { return lift_material(s.floor.material); }
  Vec3d pattern_color() const { return s.floor.pattern.color_b; }
  MaterialT<double> material(int k) const { return lift_material(s.objects[k].material); }
  Vec3d center(int k) const { return s.objects[k].sphere().center; }
  Vec3d radii(int k) const { return s.objects[k].sphere().radii; }
  Vec3d vertex(int k, int i) const { return s.objects[k].mesh().vertices[i]; }
};

/// Scene parameters as tape leaves; records (tape node, flat slot) pairs.
struct TapeParams {
  using T = diff::Var;
  const SceneModel& s;
  const ParamIndex& idx;
  const GradientRequest& req;
  std::vector<std::pair<std::int32_t, std::size_t>>& leaves;

  diff::Var leaf(double v, std::size_t slot, bool want) const {
    if (!want) return diff::Var(v);
    diff::Var x = diff::Var::leaf(v);
    leaves.emplace_back(x.index(), slot);
    return x;
  }
  Vec3<diff::Var> leaf3(const Vec3d& v, std::size_t slot, bool want) const {
    return {leaf(v.x, slot, want), leaf(v.y, slot + 1, want), leaf(v.z, slot + 2, want)};
  }
  MaterialT<diff::Var> mat(const Material& m, std::size_t o, bool want) const {
    return {leaf(m.ambient, o, want), leaf(m.diffuse, o + 1, want), leaf(m.specular, o + 2, want),
            leaf(m.shininess, o + 3, want), leaf3(m.color, o + 4, want)};
  }
  LightT<diff::Var> light() const {
    return {leaf3(s.light.position, ParamIndex::kLightPosition, req.light),
            leaf(s.light.intensity, ParamIndex::kLightIntensity, req.light)};
  }
  MaterialT<diff::Var> floor_material() const {
    return mat(s.floor.material, ParamIndex::kFloorMaterial, req.floor);
  }
  Vec3<diff::Var> pattern_color() const {
    return leaf3(s.floor.pattern.color_b, ParamIndex::kFloorPattern, req.floor);
  }
  MaterialT<diff::Var> material(int k) const { return mat(s.objects[k].material, idx.material(k), req.materials); }
  Vec3<diff::Var> center(int k) const { return leaf3(s.objects[k].sphere().center, idx.geometry(k), req.geometry); }
  Vec3<diff::Var> radii(int k) const {
    return leaf3(s.objects[k].sphere().radii, idx.geometry(k) + 3, req.geometry);
  }
  Vec3<diff::Var> vertex(int k, int i) const {
    return leaf3(s.objects[k].mesh().vertices[i], idx.geometry(k) + 3 * static_cast<std::size_t>(i), req.geometry);
  }
};

template <class T>
struct SurfaceSample {
  T t;
  Vec3<T> normal;
};

/// Recomputes the hit of primitive `prim` of object k in T arithmetic.
template <class P, class T = typename P::T>
std::optional<SurfaceSample<T>> object_surface(const P& p, int k, int prim, const Vec3d& dir, double t_eps) {
  const SceneObject& obj = p.s.objects[k];
  if (obj.is_sphere()) {
    auto h = ray_sphere_intersect<T>({}, dir, p.center(k), p.radii(k), t_eps);
    if (!h) return std::nullopt;
    return SurfaceSample<T>{h->t, h->normal};
  }
  const Face& f = obj.mesh().faces[prim];
  const Vec3<T> v0 = p.vertex(k, f[0]);
  const Vec3<T> e1 = p.vertex(k, f[1]) - v0;
  const Vec3<T> e2 = p.vertex(k, f[2]) - v0;
  const double area2 = norm(cross(value_of(e1), value_of(e2)));
  auto h = ray_triangle_edges<T>({}, dir, v0, e1, e2, area2, t_eps);
  if (!h) return std::nullopt;
  return SurfaceSample<T>{h->t, facing_normal(e1, e2, dir)};
}

template <class T>
struct PixelValue {
  Vec3<T> rgb;
  T depth;
};

/// Shaded color and depth of the composite hit.
template <class P, class T = typename P::T>
PixelValue<T> shade_pixel(const P& p, int hit, int prim, double floor_t, const Vec3d& dir, double t_eps) {
  PixelValue<T> out{{T(0.0), T(0.0), T(0.0)}, T(0.0)};
  const Vec3d view = -dir;
  if (hit == kHitFloor) {
    const FloorModel& fl = p.s.floor;
    const Vec3d x = dir * floor_t;
    const Vec3d n = dot(fl.up, dir) > 0.0 ? -fl.up : fl.up;
    const MaterialT<T> m = p.floor_material();
    const Vec3<T> base = checker_primary(fl, x) ? m.color : p.pattern_color();
    out.rgb = phong_shade<T>(lift<T>(x), lift<T>(n), view, m, p.light(), base);
    out.depth = T(floor_t * dir.z);
    return out;
  }
  if (hit < 0) return out;
  auto surf = object_surface(p, hit, prim, dir, t_eps);
  if (!surf) return out;
  const Vec3<T> x = lift<T>(dir) * surf->t;
  const MaterialT<T> m = p.material(hit);
  out.rgb = phong_shade<T>(x, surf->normal, view, m, p.light(), m.color);
  out.depth = surf->t * dir.z;
  return out;
}

}  // namespace detail

inline Vec3d pixel_ray(const CameraIntrinsics& k, int col, int row) { return normalized(k.unproject(col, row)); }

inline RenderOutput render(const SceneModel& scene, const RenderConfig& cfg = {}) {
  scene.validate();
  cfg.soft_mask.validate();
  const CameraIntrinsics& k = scene.intrinsics;
  const int w = k.width, h = k.height;
  const int n_obj = static_cast<int>(scene.objects.size());

  std::vector<detail::ObjectAccel> accel;
  accel.reserve(scene.objects.size());
  for (const auto& o : scene.objects) accel.push_back(detail::build_accel(o, k, cfg.binning));

  RenderOutput out;
  out.width = w;
  out.height = h;
  out.rgb = ImageD(w, h, 3, 0.0);
  out.depth = ImageD(w, h, 1, 0.0);
  out.hit_ids.assign(out.depth.pixels(), kHitNone);
  out.hit_prims.assign(out.depth.pixels(), -1);
  const double bg_mask = soft_mask_value(0.0, cfg.soft_mask);
  out.soft_masks.assign(n_obj, ImageD(w, h, 1, bg_mask));
  out.layer_depths.assign(n_obj, ImageD(w, h, 1, 0.0));
  out.layer_prims.assign(n_obj, std::vector<int>(out.depth.pixels(), -1));
  const detail::ValueParams vp{scene};

#pragma omp parallel for schedule(dynamic, 1)
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const std::size_t i = pixel_index(col, row, w);
      const Vec3d dir = pixel_ray(k, col, row);
      int hit = kHitNone, prim = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int o = 0; o < n_obj; ++o) {
        const detail::LayerHit lh = detail::search_layer(scene.objects[o], accel[o], dir, col, row, cfg.t_eps);
        if (lh.prim < 0) continue;
        const double d = lh.t * dir.z;
        out.layer_prims[o][i] = lh.prim;
        out.layer_depths[o].data[i] = d;
        out.soft_masks[o].data[i] = soft_mask_value(d, cfg.soft_mask);
        if (lh.t < best) best = lh.t, hit = o, prim = lh.prim;
      }
      double floor_t = 0.0;
      if (scene.floor.enabled) {
        if (auto ft = ray_floor_intersect({}, dir, scene.floor.up, scene.floor.height, scene.floor.max_distance,
                                          cfg.t_eps);
            ft && *ft < best) {
          best = *ft, hit = kHitFloor, prim = -1, floor_t = *ft;
        }
      }
      out.hit_ids[i] = hit;
      out.hit_prims[i] = prim;
      if (hit == kHitNone) continue;
      const auto px = detail::shade_pixel(vp, hit, prim, floor_t, dir, cfg.t_eps);
      out.rgb.data[3 * i] = px.rgb.x;
      out.rgb.data[3 * i + 1] = px.rgb.y;
      out.rgb.data[3 * i + 2] = px.rgb.z;
      out.depth.data[i] = px.depth;
    }
  }
  return out;
}

/// dL/dtheta in ParamIndex layout for output adjoints `adj` of the render `out`
/// (which must come from render(scene, cfg)).
inline std::vector<double> render_backward(const SceneModel& scene, const RenderConfig& cfg, const RenderOutput& out,
                                           const RenderAdjoint& adj, const GradientRequest& req = {}) {
  const CameraIntrinsics& k = scene.intrinsics;
  const int w = k.width, h = k.height;
  const int n_obj = static_cast<int>(scene.objects.size());
  const ParamIndex idx(scene);
  const bool has_rgb = !adj.rgb.empty(), has_depth = !adj.depth.empty();
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(h);

#pragma omp parallel
  {
    diff::Tape tape;
    std::vector<double> adjoint;
    std::vector<std::pair<std::int32_t, std::size_t>> leaves;
#pragma omp for schedule(dynamic, 1)
    for (int row = 0; row < h; ++row) {
      auto& contrib = rows[row];
      for (int col = 0; col < w; ++col) {
        const std::size_t i = pixel_index(col, row, w);
        const int hit = out.hit_ids[i];
        double a_rgb[3] = {0, 0, 0};
        double a_depth = 0.0;
        if (has_rgb) a_rgb[0] = adj.rgb[3 * i], a_rgb[1] = adj.rgb[3 * i + 1], a_rgb[2] = adj.rgb[3 * i + 2];
        if (has_depth) a_depth = adj.depth[i];
        bool shade = hit != kHitNone && (a_rgb[0] != 0.0 || a_rgb[1] != 0.0 || a_rgb[2] != 0.0 || a_depth != 0.0);
        if (hit == kHitFloor) shade = shade && (req.light || req.floor);
        if (hit >= 0) shade = shade && (req.light || req.materials || req.geometry);
        bool any_mask = false;
        if (req.geometry)
          for (int o = 0; o < n_obj && !any_mask; ++o)
            any_mask = !adj.masks.empty() && !adj.masks[o].empty() && adj.masks[o][i] != 0.0 &&
                       out.layer_prims[o][i] >= 0;
        if (!shade && !any_mask) continue;

        tape.clear();
        leaves.clear();
        diff::TapeScope scope(tape);
        const detail::TapeParams tp{scene, idx, req, leaves};
        const Vec3d dir = pixel_ray(k, col, row);
        diff::Var total(0.0);
        if (shade) {
          const double floor_t = hit == kHitFloor ? *ray_floor_intersect({}, dir, scene.floor.up, scene.floor.height,
                                                                         scene.floor.max_distance, cfg.t_eps)
                                                  : 0.0;
          const auto px = detail::shade_pixel(tp, hit, out.hit_prims[i], floor_t, dir, cfg.t_eps);
          total = px.rgb.x * a_rgb[0] + px.rgb.y * a_rgb[1] + px.rgb.z * a_rgb[2] + px.depth * a_depth;
        }
        if (any_mask) {
          for (int o = 0; o < n_obj; ++o) {
            if (adj.masks[o].empty() || adj.masks[o][i] == 0.0 || out.layer_prims[o][i] < 0) continue;
            auto surf = detail::object_surface(tp, o, out.layer_prims[o][i], dir, cfg.t_eps);
            if (!surf) continue;
            total += soft_mask_value(diff::Var(surf->t * dir.z), cfg.soft_mask) * adj.masks[o][i];
          }
        }
        if (total.is_constant()) continue;
        adjoint.assign(tape.size(), 0.0);
        adjoint[static_cast<std::size_t>(total.index())] = 1.0;
        tape.propagate(adjoint);
        for (const auto& [node, slot] : leaves) {
          const double g = adjoint[static_cast<std::size_t>(node)];
          if (g != 0.0) contrib.emplace_back(slot, g);
        }
      }
    }
  }

  std::vector<double> grad(idx.total(), 0.0);
  for (const auto& r : rows)
    for (const auto& [slot, g] : r) grad[slot] += g;
  return grad;
}

}  // namespace scenefit::render
