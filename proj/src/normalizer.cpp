#include "trajflow/normalizer.hpp"

#include <algorithm>
#include <cmath>

#include "trajflow/errors.hpp"

namespace trajflow {

FutureTrajectory Normalizer::normalize(const FutureTrajectory& t) const {
  FutureTrajectory out;
  out.waypoints = (t.waypoints.rowwise() - offset.transpose()).array().rowwise() / scale.transpose().array();
  return out;
}

FutureTrajectory Normalizer::denormalize(const FutureTrajectory& t) const {
  FutureTrajectory out;
  out.waypoints = (t.waypoints.array().rowwise() * scale.transpose().array()).matrix().rowwise() + offset.transpose();
  return out;
}

Eigen::MatrixXd Normalizer::normalize_flat(const Eigen::MatrixXd& rows) const {
  if (rows.cols() % 2 != 0) throw DimensionError("normalize_flat: odd column count");
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const auto axis = c % 2;
    out.col(c) = (rows.col(c).array() - offset(axis)) / scale(axis);
  }
  return out;
}

Eigen::MatrixXd Normalizer::denormalize_flat(const Eigen::MatrixXd& rows) const {
  if (rows.cols() % 2 != 0) throw DimensionError("denormalize_flat: odd column count");
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const auto axis = c % 2;
    out.col(c) = rows.col(c).array() * scale(axis) + offset(axis);
  }
  return out;
}

Normalizer fit_normalizer(const std::vector<FutureTrajectory>& dataset, double coverage) {
  if (dataset.empty()) throw DataError("fit_normalizer: empty dataset");
  if (!(coverage > 0.5 && coverage <= 1.0)) throw ConfigError("fit_normalizer: coverage must be in (0.5, 1]");
  Normalizer n;
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<double> v;
    for (const auto& t : dataset) {
      if (t.waypoints.cols() != 2) throw DimensionError("fit_normalizer: waypoints must be T_f x 2");
      for (Eigen::Index i = 0; i < t.waypoints.rows(); ++i) v.push_back(t.waypoints(i, axis));
    }
    if (v.empty()) throw DataError("fit_normalizer: dataset has no waypoints");
    std::sort(v.begin(), v.end());
    const std::size_t count = v.size();
    const auto need = std::min(count, static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(count))));
    const std::size_t lo = (count - need) / 2;
    const std::size_t hi = lo + need - 1;
    const double a = v[lo];
    const double b = v[hi];
    n.offset(axis) = 0.5 * (a + b);
    // Slight widening absorbs round-off at the band edges.
    n.scale(axis) = std::max(0.5 * (b - a) * (1.0 + 1e-12), Normalizer::kMinScale);
  }
  return n;
}

}  // namespace trajflow
