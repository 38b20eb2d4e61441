#pragma once

#include <vector>

#include <Eigen/Dense>

#include "trajflow/scene.hpp"

namespace trajflow {

/// Per-coordinate affine map of trajectory coordinates into [-1, 1]:
/// normalized = (x - offset) / scale.
struct Normalizer {
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  Eigen::Vector2d scale = Eigen::Vector2d::Ones();

  static constexpr double kMinScale = 1e-6;

  FutureTrajectory normalize(const FutureTrajectory& t) const;
  FutureTrajectory denormalize(const FutureTrajectory& t) const;

  /// Row-wise on interleaved (x0, y0, x1, y1, ...) rows.
  Eigen::MatrixXd normalize_flat(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd denormalize_flat(const Eigen::MatrixXd& rows) const;
};

/// Chooses offset/scale per coordinate from the central `coverage` quantile
/// band so that at least that fraction of all waypoint coordinates lands in
/// [-1, 1]. Scale is floored at Normalizer::kMinScale.
Normalizer fit_normalizer(const std::vector<FutureTrajectory>& dataset, double coverage);

}  // namespace trajflow
