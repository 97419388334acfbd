#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/errors.hpp"
#include "scenefit/render/scene.hpp"

namespace scenefit::scene_opt {

struct PlaneFit {
  Vec3d up;       // unit normal on the camera side
  double height;  // camera distance to the plane
  double rms = 0.0;
  std::size_t inliers = 0;
};

/// Least-squares plane through points, oriented so the origin lies on the
/// positive side.
inline PlaneFit fit_plane(const std::vector<Vec3d>& pts) {
  if (pts.size() < 3) throw EmptyCloud();
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += Eigen::Vector3d(p.x, p.y, p.z);
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Vector3d n = es.eigenvectors().col(0);
  double h = -n.dot(mean);
  if (h < 0) {
    n = -n;
    h = -h;
  }
  PlaneFit f{{n.x(), n.y(), n.z()}, h, 0.0, pts.size()};
  double ss = 0.0;
  for (const auto& p : pts) {
    const double r = dot(f.up, p) + f.height;
    ss += r * r;
  }
  f.rms = std::sqrt(ss / static_cast<double>(pts.size()));
  return f;
}

/// Floor plane from valid depth outside every object mask, refit twice on
/// the points within 3 median residuals.
inline PlaneFit fit_floor_plane(const ObservationSet& obs) {
  const PointCloud cloud = backproject(obs.depth, obs.intrinsics);
  std::vector<Vec3d> pts;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [col, row] = cloud.source_pixels[i];
    bool masked = false;
    for (const auto& m : obs.masks) masked = masked || m.at(col, row) != 0;
    if (!masked) pts.push_back(cloud.points[i]);
  }
  PlaneFit f = fit_plane(pts);
  for (int round = 0; round < 2; ++round) {
    std::vector<double> res;
    res.reserve(pts.size());
    for (const auto& p : pts) res.push_back(std::fabs(dot(f.up, p) + f.height));
    std::vector<double> sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double cut = 3.0 * std::max(sorted[sorted.size() / 2], 1e-6);
    std::vector<Vec3d> kept;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (res[i] <= cut) kept.push_back(pts[i]);
    if (kept.size() < 3) break;
    f = fit_plane(kept);
  }
  return f;
}

/// Floor model with fitted geometry and the given pattern layout; material
/// and colors are left for the optimizer.
inline render::FloorModel estimate_floor(const ObservationSet& obs, const render::FloorModel& layout) {
  const PlaneFit f = fit_floor_plane(obs);
  render::FloorModel floor = layout;
  floor.up = f.up;
  floor.height = f.height;
  return floor;
}

}  // namespace scenefit::scene_opt
