#pragma once

// Masked photometric / depth / silhouette losses and the barrier penalty.
// Losses return their value together with the adjoint images that the
// renderer's backward pass consumes.

#include <cmath>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/diff/math.hpp"
#include "scenefit/render/renderer.hpp"

namespace scenefit::scene_opt {

struct LossWeights {
  double w_i = 1.0;
  double w_d = 1.0;
  double w_m = 1.0;
  double w_smooth = 0.1;
  double w_lap = 10.0;
  double w_vol = 100.0;
  /// Relative weight of the image term over floor pixels (valid depth, no
  /// object mask); the term is scaled by w_i as well.
  double floor_scale = 1.0;
  /// Relative weight of the per-object image terms, also scaled by w_i.
  double object_image_scale = 1.0;

  void validate() const {
    if (w_i < 0 || w_d < 0 || w_m < 0 || w_smooth < 0 || w_lap < 0 || w_vol < 0 || floor_scale < 0 ||
        object_image_scale < 0)
      throw InvalidInput("loss weights must be non-negative");
  }
};

struct BarrierConfig {
  double curvature = 20.0;
  double weight = 0.01;
  double max_shininess = render::kDefaultMaxShininess;
  double max_intensity = 10.0;

  void validate() const {
    if (!(curvature > 0.0)) throw InvalidInput("barrier curvature must be positive");
    if (!(max_shininess > 1.0)) throw InvalidInput("max shininess must exceed 1");
  }
};

/// exp(-c (x - lo)) + exp(c (x - hi)).
template <class T>
T barrier(const T& x, double lo, double hi, double c) {
  return diff::exp(T((x - lo) * -c)) + diff::exp(T((x - hi) * c));
}

inline double barrier_derivative(double x, double lo, double hi, double c) {
  return -c * std::exp(-c * (x - lo)) + c * std::exp(c * (x - hi));
}

struct ObjectLoss {
  double mae_i = 0.0, mae_d = 0.0, mae_m = 0.0;
  // Mesh-stage terms (zero in the sphere stage).
  double smooth = 0.0, lap = 0.0, vol = 0.0;
  double volume_sphere = 0.0, volume_mesh = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double data = 0.0;     // sum_k w_i MAE_i + w_d MAE_d + w_m MAE_m, plus w_i floor_scale floor_mae_i
  double floor_mae_i = 0.0;
  double barrier = 0.0;  // weighted barrier sum
  double regularizer = 0.0;
  std::vector<ObjectLoss> objects;
};

/// Mean smooth-|a - b| over pixels with mask != 0 (all channels); 0 for an
/// empty mask. `grad` (optional, same size as a) receives d/da.
inline double masked_mae(std::span<const double> a, std::span<const double> b, const Mask& mask, int channels,
                         std::span<double> grad = {}, double scale = 1.0) {
  if (a.size() != b.size() || a.size() != mask.pixels() * channels) throw InvalidInput("masked_mae shape mismatch");
  std::size_t n = 0;
  for (auto m : mask.data) n += m != 0;
  if (n == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(n * channels);
  double s = 0.0;
  for (std::size_t i = 0; i < mask.pixels(); ++i) {
    if (mask.data[i] == 0) continue;
    for (int c = 0; c < channels; ++c) {
      const std::size_t j = i * channels + c;
      const double d = a[j] - b[j];
      s += diff::smooth_abs(d);
      if (!grad.empty()) grad[j] += scale * inv * diff::smooth_abs_derivative(d);
    }
  }
  return s * inv;
}

struct PixelLoss {
  LossBreakdown breakdown;
  render::RenderAdjoint adjoint;
};

/// Data terms of the scene loss. Image and depth terms are restricted to each
/// observed mask (depth additionally to valid observed depth); the mask term
/// compares the object's soft mask with its observed mask over the full frame.
/// Floor pixels get their own image term so floor and light parameters are
/// observable.
inline PixelLoss scene_data_loss(const ObservationSet& obs, const render::RenderOutput& out, const LossWeights& w,
                                 bool with_adjoint) {
  const std::size_t n_pix = obs.depth.pixels();
  const std::size_t n_obj = obs.masks.size();
  if (out.width != obs.rgb.width || out.height != obs.rgb.height) throw InvalidInput("render/observation size mismatch");
  if (out.soft_masks.size() != n_obj) throw InvalidInput("render object count does not match masks");
  PixelLoss r;
  r.breakdown.objects.resize(n_obj);
  if (with_adjoint) {
    r.adjoint.rgb.assign(3 * n_pix, 0.0);
    r.adjoint.depth.assign(n_pix, 0.0);
    r.adjoint.masks.assign(n_obj, std::vector<double>(n_pix, 0.0));
  }
  std::span<double> g_rgb(r.adjoint.rgb), g_depth(r.adjoint.depth);
  for (std::size_t k = 0; k < n_obj; ++k) {
    const Mask& m = obs.masks[k];
    ObjectLoss& ol = r.breakdown.objects[k];
    ol.mae_i = masked_mae(out.rgb.data, obs.rgb.data, m, 3, g_rgb, w.w_i * w.object_image_scale);
    Mask depth_mask = m;
    for (std::size_t i = 0; i < n_pix; ++i) depth_mask.data[i] = m.data[i] != 0 && obs.depth.data[i] > 0.0;
    ol.mae_d = masked_mae(out.depth.data, obs.depth.data, depth_mask, 1, g_depth, w.w_d);
    // Full-frame mask term.
    double s = 0.0;
    const double inv = 1.0 / static_cast<double>(n_pix);
    for (std::size_t i = 0; i < n_pix; ++i) {
      const double d = out.soft_masks[k].data[i] - (m.data[i] != 0 ? 1.0 : 0.0);
      s += diff::smooth_abs(d);
      if (with_adjoint) r.adjoint.masks[k][i] = w.w_m * inv * diff::smooth_abs_derivative(d);
    }
    ol.mae_m = s * inv;
    r.breakdown.data += w.w_i * w.object_image_scale * ol.mae_i + w.w_d * ol.mae_d + w.w_m * ol.mae_m;
  }
  Mask floor_mask(obs.depth.width, obs.depth.height);
  for (std::size_t i = 0; i < n_pix; ++i) {
    bool any = false;
    for (const auto& m : obs.masks) any = any || m.data[i] != 0;
    floor_mask.data[i] = !any && obs.depth.data[i] > 0.0;
  }
  const double wf = w.w_i * w.floor_scale;
  r.breakdown.floor_mae_i = masked_mae(out.rgb.data, obs.rgb.data, floor_mask, 3, g_rgb, wf);
  r.breakdown.data += wf * r.breakdown.floor_mae_i;
  r.breakdown.total = r.breakdown.data;
  return r;
}

/// Barrier sum over bounded scene parameters; `grad` is in ParamIndex layout.
inline double scene_barrier(const render::SceneModel& s, const BarrierConfig& b, std::span<double> grad = {}) {
  const double c = b.curvature, w = b.weight;
  double total = 0.0;
  auto add = [&](double x, double lo, double hi, std::size_t slot) {
    total += w * barrier(x, lo, hi, c);
    if (!grad.empty()) grad[slot] += w * barrier_derivative(x, lo, hi, c);
  };
  auto material = [&](const render::Material& m, std::size_t o) {
    add(m.ambient, 0.0, 1.0, o);
    add(m.diffuse, 0.0, 1.0, o + 1);
    add(m.specular, 0.0, 1.0, o + 2);
    add(m.shininess, 1.0, b.max_shininess, o + 3);
    add(m.color.x, 0.0, 1.0, o + 4);
    add(m.color.y, 0.0, 1.0, o + 5);
    add(m.color.z, 0.0, 1.0, o + 6);
  };
  const render::ParamIndex idx(s);
  add(s.light.intensity, 0.0, b.max_intensity, render::ParamIndex::kLightIntensity);
  material(s.floor.material, render::ParamIndex::kFloorMaterial);
  for (int j = 0; j < 3; ++j) add(s.floor.pattern.color_b[j], 0.0, 1.0, render::ParamIndex::kFloorPattern + j);
  for (int k = 0; k < static_cast<int>(s.objects.size()); ++k) material(s.objects[k].material, idx.material(k));
  return total;
}

}  // namespace scenefit::scene_opt
