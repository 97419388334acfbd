#pragma once

// Pinhole camera, depth backprojection and mask partitioning. Pixel centres
// sit at integer array coordinates, so pixel (cx, cy) looks down the optical axis.

#include <array>
#include <cmath>
#include <vector>

#include "scenefit/camera/image.hpp"
#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"

namespace scenefit {

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.5, cy = 0.5;
  int width = 1, height = 1;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw InvalidInput("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidInput("image size must be positive");
    if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height))
      throw InvalidInput("principal point must lie inside the image");
  }

  /// Intrinsics for an image downscaled by `fraction` (pixel counts are rounded).
  CameraIntrinsics scaled(double fraction) const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("resolution fraction must lie in (0, 1]");
    CameraIntrinsics k{fx * fraction, fy * fraction, cx * fraction, cy * fraction,
                       static_cast<int>(std::lround(width * fraction)),
                       static_cast<int>(std::lround(height * fraction))};
    k.validate();
    return k;
  }

  /// K^-1 (u, v, 1): ray through a pixel with unit z component.
  Vec3d unproject(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct Projection {
  double u, v, depth;
};

inline Projection project(const Vec3d& p, const CameraIntrinsics& k) {
  return {k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z};
}

struct ObservationSet {
  ImageD rgb;    // 3 channels in [0, 1]
  ImageD depth;  // meters, 0 = invalid
  std::vector<Mask> masks;
  CameraIntrinsics intrinsics;

  void validate() const {
    intrinsics.validate();
    const int w = intrinsics.width, h = intrinsics.height;
    if (!rgb.same_shape(w, h) || rgb.channels != 3) throw InvalidInput("rgb image does not match intrinsics");
    if (!depth.same_shape(w, h) || depth.channels != 1) throw InvalidInput("depth image does not match intrinsics");
    for (double d : depth.data)
      if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidInput("depth must be finite and non-negative");
    for (const auto& m : masks) {
      if (!m.same_shape(w, h) || m.channels != 1) throw InvalidInput("mask does not match intrinsics");
      for (auto v : m.data)
        if (v > 1) throw InvalidInput("masks must be binary");
    }
  }
};

struct PointCloud {
  std::vector<Vec3d> points;
  std::vector<std::array<int, 2>> source_pixels;  // (col, row)

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Points D * K^-1 (u, v, 1) for every valid pixel, in flat pixel order.
inline PointCloud backproject(const ImageD& depth, const CameraIntrinsics& k) {
  k.validate();
  if (!depth.same_shape(k.width, k.height)) throw InvalidInput("depth image does not match intrinsics");
  PointCloud cloud;
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const double d = depth.at(col, row);
      if (!(d > 0.0)) continue;
      cloud.points.push_back(k.unproject(col, row) * d);
      cloud.source_pixels.push_back({col, row});
    }
  }
  return cloud;
}

inline constexpr std::size_t kMinObjectPoints = 10;

struct ObjectCloud {
  PointCloud cloud;
  bool empty_object_cloud = false;  // fewer than kMinObjectPoints points
};

/// Splits a cloud by masks; overlapping masks share points.
inline std::vector<ObjectCloud> partition_by_masks(const PointCloud& cloud, const std::vector<Mask>& masks) {
  std::vector<ObjectCloud> parts(masks.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [col, row] = cloud.source_pixels[i];
    for (std::size_t k = 0; k < masks.size(); ++k) {
      const Mask& m = masks[k];
      if (col >= m.width || row >= m.height) throw InvalidInput("mask smaller than source image");
      if (m.at(col, row) == 0) continue;
      parts[k].cloud.points.push_back(cloud.points[i]);
      parts[k].cloud.source_pixels.push_back(cloud.source_pixels[i]);
    }
  }
  for (auto& p : parts) p.empty_object_cloud = p.cloud.size() < kMinObjectPoints;
  return parts;
}

struct CloudStats {
  Vec3d mean;
  Vec3d stddev;  // population standard deviation per axis
};

inline CloudStats cloud_stats(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyCloud();
  const double n = static_cast<double>(cloud.size());
  Vec3d mean;
  for (const auto& p : cloud.points) mean += p;
  mean = mean / n;
  Vec3d var;
  for (const auto& p : cloud.points) {
    const Vec3d d = p - mean;
    var += hadamard(d, d);
  }
  var = var / n;
  return {mean, {std::sqrt(var.x), std::sqrt(var.y), std::sqrt(var.z)}};
}

}  // namespace scenefit
