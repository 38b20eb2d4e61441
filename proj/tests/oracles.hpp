#pragma once

// Brute-force reference implementations of the evaluation metrics, written
// independently of src/metrics.cpp.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "trajflow/metrics.hpp"
#include "trajflow/rng.hpp"

namespace oracle {

inline double point_dist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int s) {
  const double dx = a(s, 0) - b(s, 0), dy = a(s, 1) - b(s, 1);
  return std::sqrt(dx * dx + dy * dy);
}

inline double min_ade(const trajflow::PredictionSet& p, const trajflow::FutureTrajectory& gt) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : p.trajectories) {
    double sum = 0.0;
    for (int s = 0; s < gt.steps(); ++s) sum += point_dist(t.waypoints, gt.waypoints, s);
    best = std::min(best, sum / gt.steps());
  }
  return best;
}

inline double min_fde(const trajflow::PredictionSet& p, const trajflow::FutureTrajectory& gt) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : p.trajectories) best = std::min(best, point_dist(t.waypoints, gt.waypoints, gt.steps() - 1));
  return best;
}

/// Area under the interpolated PR curve, built point by point: every TP
/// raises recall by 1/objects and contributes that width times the best
/// precision reached at any later point of the curve.
inline double average_precision(std::vector<trajflow::ScoredPrediction> preds, int objects, bool soft) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = preds[a];
    const auto& y = preds[b];
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    if (x.object != y.object) return x.object < y.object;
    return x.source < y.source;
  });
  // First pass: label every prediction.
  enum Label { tp, fp, ignored };
  std::vector<Label> label(preds.size(), fp);
  std::map<int, bool> seen;
  for (std::size_t i : order) {
    const auto& p = preds[i];
    if (!p.matches) continue;
    if (!seen[p.object]) {
      seen[p.object] = true;
      label[i] = tp;
    } else {
      label[i] = soft ? ignored : fp;
    }
  }
  // Second pass: the PR curve as (recall, precision) points.
  std::vector<double> recall, precision;
  int ntp = 0, nfp = 0;
  for (std::size_t i : order) {
    if (label[i] == ignored) continue;
    (label[i] == tp ? ntp : nfp) += 1;
    recall.push_back(static_cast<double>(ntp) / objects);
    precision.push_back(static_cast<double>(ntp) / (ntp + nfp));
  }
  double area = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    const double width = recall[i] - prev_recall;
    if (width <= 0.0) continue;
    double interp = 0.0;
    for (std::size_t j = i; j < recall.size(); ++j) interp = std::max(interp, precision[j]);
    area += width * interp;
    prev_recall = recall[i];
  }
  return area;
}

struct MapResult {
  double map = 0.0;
  double soft_map = 0.0;
};

inline MapResult mean_average_precision(const std::vector<trajflow::EvalItem>& items, double threshold) {
  std::map<int, std::vector<trajflow::ScoredPrediction>> pools;
  std::map<int, int> counts;
  for (const auto& item : items) {
    const int b = static_cast<int>(item.bucket);
    const int obj = counts[b]++;
    const int last = item.gt.steps() - 1;
    for (int k = 0; k < item.preds.size(); ++k) {
      const double d = point_dist(item.preds.trajectories[static_cast<std::size_t>(k)].waypoints, item.gt.waypoints, last);
      pools[b].push_back({item.preds.confidences[static_cast<std::size_t>(k)], obj,
                          item.preds.source_indices[static_cast<std::size_t>(k)], d <= threshold});
    }
  }
  MapResult r;
  for (const auto& [b, pool] : pools) {
    r.map += oracle::average_precision(pool, counts[b], false);
    r.soft_map += oracle::average_precision(pool, counts[b], true);
  }
  r.map /= static_cast<double>(pools.size());
  r.soft_map /= static_cast<double>(pools.size());
  return r;
}

inline Eigen::Vector2d endpoint(const Eigen::MatrixXd& trajs, int i) {
  return Eigen::Vector2d(trajs(i, trajs.cols() - 2), trajs(i, trajs.cols() - 1));
}

/// Independent greedy reference: repeatedly pick the best remaining
/// candidate by (score desc, index asc) among those not within the threshold
/// of anything already kept; then pad with the rest by the same order.
inline std::vector<int> greedy_nms(const Eigen::MatrixXd& trajs, const Eigen::VectorXd& s, int k, double thr) {
  const int n = static_cast<int>(trajs.rows());
  auto better = [&](int a, int b) { return s(a) > s(b) || (s(a) == s(b) && a < b); };
  std::vector<int> kept;
  std::vector<bool> used(n, false);
  while (static_cast<int>(kept.size()) < k) {
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      bool near = false;
      for (int j : kept) near = near || (thr > 0.0 && (endpoint(trajs, i) - endpoint(trajs, j)).norm() <= thr);
      if (near) continue;
      if (pick < 0 || better(i, pick)) pick = i;
    }
    if (pick < 0) break;
    used[pick] = true;
    kept.push_back(pick);
  }
  while (static_cast<int>(kept.size()) < k) {
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (!used[i] && (pick < 0 || better(i, pick))) pick = i;
    }
    used[pick] = true;
    kept.push_back(pick);
  }
  return kept;
}

inline std::vector<int> sorted_by_score(std::vector<int> idx, const Eigen::VectorXd& s) {
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return s(a) > s(b) || (s(a) == s(b) && a < b); });
  return idx;
}

/// A random evaluation instance: K predictions scattered around a random
/// ground truth, some near it, some far away.
inline trajflow::EvalItem random_item(trajflow::Rng& rng, int k, int steps) {
  trajflow::EvalItem item;
  item.gt.waypoints.resize(steps, 2);
  for (int s = 0; s < steps; ++s) {
    item.gt.waypoints(s, 0) = s + rng.uniform(-0.5, 0.5);
    item.gt.waypoints(s, 1) = rng.uniform(-3.0, 3.0);
  }
  for (int j = 0; j < k; ++j) {
    const double spread = rng.uniform() < 0.5 ? 0.8 : 4.0;
    trajflow::FutureTrajectory t;
    t.waypoints = item.gt.waypoints;
    for (Eigen::Index i = 0; i < t.waypoints.size(); ++i) t.waypoints.data()[i] += rng.uniform(-spread, spread);
    item.preds.trajectories.push_back(t);
    // Coarse confidences so that ties occur.
    item.preds.confidences.push_back(std::round(rng.uniform() * 20.0) / 20.0);
    item.preds.source_indices.push_back(j);
    item.preds.padded.push_back(0);
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return item.preds.confidences[a] > item.preds.confidences[b]; });
  trajflow::PredictionSet sorted;
  for (std::size_t i : idx) {
    sorted.trajectories.push_back(item.preds.trajectories[i]);
    sorted.confidences.push_back(item.preds.confidences[i]);
    sorted.source_indices.push_back(item.preds.source_indices[i]);
    sorted.padded.push_back(0);
  }
  item.preds = sorted;
  item.bucket = static_cast<trajflow::MotionBucket>(rng.index(4));
  return item;
}

}  // namespace oracle
