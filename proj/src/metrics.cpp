#include "trajflow/metrics.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>

#include "trajflow/errors.hpp"

namespace trajflow {

std::string to_string(MotionBucket b) {
  switch (b) {
    case MotionBucket::stationary: return "stationary";
    case MotionBucket::straight: return "straight";
    case MotionBucket::left_turn: return "left_turn";
    case MotionBucket::right_turn: return "right_turn";
  }
  return "unknown";
}

namespace {

void check_preds(const PredictionSet& preds, const FutureTrajectory& gt) {
  if (preds.size() == 0) throw DataError("empty prediction set");
  if (gt.steps() == 0) throw DataError("empty ground-truth trajectory");
  for (const auto& t : preds.trajectories) {
    if (t.steps() != gt.steps() || t.waypoints.cols() != 2) throw DimensionError("prediction/GT horizon mismatch");
  }
}

}  // namespace

double min_ade(const PredictionSet& preds, const FutureTrajectory& gt) {
  check_preds(preds, gt);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : preds.trajectories) {
    // Plain left-to-right sum so the value does not depend on vectorization.
    double sum = 0.0;
    for (int s = 0; s < gt.steps(); ++s) sum += (t.waypoints.row(s) - gt.waypoints.row(s)).norm();
    best = std::min(best, sum / gt.steps());
  }
  return best;
}

double min_fde(const PredictionSet& preds, const FutureTrajectory& gt) {
  check_preds(preds, gt);
  const int last = gt.steps() - 1;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : preds.trajectories) {
    best = std::min(best, (t.waypoints.row(last) - gt.waypoints.row(last)).norm());
  }
  return best;
}

bool miss(const PredictionSet& preds, const FutureTrajectory& gt, double threshold) {
  return min_fde(preds, gt) > threshold;
}

MotionBucket classify_motion(const FutureTrajectory& gt, const AgentHistory& ego, const MetricConfig& cfg) {
  if (gt.steps() == 0) throw DataError("classify_motion: empty trajectory");
  const int cur = ego.last_valid();
  const Eigen::Vector2d origin = cur >= 0 ? ego.position(cur) : Eigen::Vector2d::Zero();
  const double heading = cur >= 0 ? ego.heading(cur) : 0.0;
  const int last = gt.steps() - 1;
  const Eigen::Vector2d end = gt.waypoints.row(last).transpose();
  if ((end - origin).norm() < cfg.stationary_distance) return MotionBucket::stationary;
  // Last segment with nonzero length; the path start is the ego position.
  Eigen::Vector2d dir = Eigen::Vector2d::Zero();
  for (int s = last; s >= 0 && dir.squaredNorm() == 0.0; --s) {
    const Eigen::Vector2d prev = s > 0 ? Eigen::Vector2d(gt.waypoints.row(s - 1).transpose()) : origin;
    dir = gt.waypoints.row(s).transpose() - prev;
  }
  const double dtheta = std::remainder(std::atan2(dir.y(), dir.x()) - heading, 2.0 * std::numbers::pi);
  const double limit = cfg.turn_threshold_deg * std::numbers::pi / 180.0;
  if (std::abs(dtheta) < limit) return MotionBucket::straight;
  return dtheta > 0.0 ? MotionBucket::left_turn : MotionBucket::right_turn;
}

double average_precision(std::vector<ScoredPrediction> preds, int objects, bool soft) {
  if (objects <= 0) throw DataError("average_precision: no objects");
  std::stable_sort(preds.begin(), preds.end(), [](const ScoredPrediction& a, const ScoredPrediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.object != b.object) return a.object < b.object;
    return a.source < b.source;
  });
  std::vector<char> claimed;
  std::vector<double> precision;
  std::vector<char> is_tp;
  int tp = 0;
  int fp = 0;
  for (const auto& p : preds) {
    if (p.object < 0) throw DataError("average_precision: negative object index");
    if (static_cast<std::size_t>(p.object) >= claimed.size()) claimed.resize(static_cast<std::size_t>(p.object) + 1, 0);
    bool hit = false;
    if (p.matches && !claimed[static_cast<std::size_t>(p.object)]) {
      claimed[static_cast<std::size_t>(p.object)] = 1;
      hit = true;
      ++tp;
    } else if (p.matches && soft) {
      continue;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    is_tp.push_back(hit ? 1 : 0);
  }
  double ap = 0.0;
  double envelope = 0.0;
  for (std::size_t i = precision.size(); i-- > 0;) {
    envelope = std::max(envelope, precision[i]);
    if (is_tp[i]) ap += envelope;
  }
  return ap / static_cast<double>(objects);
}

ApResult mean_average_precision(const std::vector<EvalItem>& items, double threshold) {
  if (items.empty()) throw DataError("mean_average_precision: empty dataset");
  std::map<MotionBucket, std::vector<ScoredPrediction>> pooled;
  std::map<MotionBucket, int> objects;
  for (const auto& item : items) {
    check_preds(item.preds, item.gt);
    const int object = objects[item.bucket]++;
    auto& pool = pooled[item.bucket];
    const int last = item.gt.steps() - 1;
    for (int k = 0; k < item.preds.size(); ++k) {
      ScoredPrediction p;
      p.confidence = item.preds.confidences[static_cast<std::size_t>(k)];
      p.object = object;
      p.source = item.preds.source_indices.empty() ? k : item.preds.source_indices[static_cast<std::size_t>(k)];
      const auto& w = item.preds.trajectories[static_cast<std::size_t>(k)].waypoints;
      p.matches = !((w.row(last) - item.gt.waypoints.row(last)).norm() > threshold);
      pool.push_back(p);
    }
  }
  ApResult r;
  for (const auto& [bucket, pool] : pooled) {
    BucketAp b;
    b.count = objects[bucket];
    b.ap = average_precision(pool, b.count, false);
    b.soft_ap = average_precision(pool, b.count, true);
    r.map += b.ap;
    r.soft_map += b.soft_ap;
    r.per_bucket[bucket] = b;
  }
  r.map /= static_cast<double>(r.per_bucket.size());
  r.soft_map /= static_cast<double>(r.per_bucket.size());
  return r;
}

MetricReport evaluate(const std::vector<EvalItem>& items, const MetricConfig& cfg) {
  if (items.empty()) throw DataError("evaluate: empty dataset");
  MetricReport r;
  int misses = 0;
  for (const auto& item : items) {
    r.min_ade += min_ade(item.preds, item.gt);
    const double fde = min_fde(item.preds, item.gt);
    r.min_fde += fde;
    if (fde > cfg.miss_threshold) ++misses;
  }
  const auto n = static_cast<double>(items.size());
  r.count = static_cast<int>(items.size());
  r.min_ade /= n;
  r.min_fde /= n;
  r.miss_rate = misses / n;
  const ApResult ap = mean_average_precision(items, cfg.miss_threshold);
  r.map = ap.map;
  r.soft_map = ap.soft_map;
  r.per_bucket = ap.per_bucket;
  return r;
}

}  // namespace trajflow
