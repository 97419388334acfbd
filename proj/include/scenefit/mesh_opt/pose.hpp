#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>

#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"

namespace scenefit::mesh_opt {

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3d translation;
};

struct PoseFit {
  Pose pose;
  /// Covariance rank < 3 or repeated eigenvalues: rotation is the identity.
  bool degenerate_covariance = false;
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // descending
};

/// Eigenvalues closer than this (relative to the largest) count as equal.
inline constexpr double kEigenTolerance = 1e-6;

/// Pose from the vertex centroid and covariance eigenvectors. Columns are
/// sorted by descending eigenvalue. Column j is signed so its dot with world
/// axis j is positive; when that dot is ~0 the first world axis (x, y, z) with
/// a non-zero dot decides. Column 2 is then cross(col0, col1).
inline PoseFit pca_pose(std::span<const Vec3d> vertices) {
  if (vertices.size() < 4) throw InvalidInput("pose needs at least 4 vertices");
  PoseFit fit;
  Vec3d c;
  for (const auto& v : vertices) c += v;
  c = c / static_cast<double>(vertices.size());
  fit.pose.translation = c;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& v : vertices) {
    const Eigen::Vector3d d(v.x - c.x, v.y - c.y, v.z - c.z);
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(vertices.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d ev = es.eigenvalues();  // ascending
  fit.eigenvalues = Eigen::Vector3d(ev(2), ev(1), ev(0));
  const double scale = std::max(ev(2), 1e-300);
  const bool rank_deficient = ev(0) <= kEigenTolerance * scale;
  const bool repeated = ev(2) - ev(1) <= kEigenTolerance * scale || ev(1) - ev(0) <= kEigenTolerance * scale;
  if (!(ev(2) > 0.0) || rank_deficient || repeated) {
    fit.degenerate_covariance = true;
    return fit;
  }
  Eigen::Matrix3d r;
  for (int j = 0; j < 2; ++j) {
    Eigen::Vector3d e = es.eigenvectors().col(2 - j);
    double ref = e(j);
    if (std::fabs(ref) <= 1e-12)
      for (int a = 0; a < 3; ++a)
        if (std::fabs(e(a)) > 1e-12) {
          ref = e(a);
          break;
        }
    if (ref < 0.0) e = -e;
    r.col(j) = e.normalized();
  }
  r.col(2) = r.col(0).cross(r.col(1)).normalized();
  fit.pose.rotation = r;
  return fit;
}

}  // namespace scenefit::mesh_opt
