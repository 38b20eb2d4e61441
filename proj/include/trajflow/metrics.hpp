#pragma once

#include <map>
#include <string>
#include <vector>

#include "trajflow/scene.hpp"
#include "trajflow/selection.hpp"

namespace trajflow {

enum class MotionBucket { stationary, straight, left_turn, right_turn };

std::string to_string(MotionBucket b);

struct MetricConfig {
  double miss_threshold = 2.0;        // final displacement, scene units
  double stationary_distance = 1.0;   // below this total displacement
  double turn_threshold_deg = 15.0;
};

double min_ade(const PredictionSet& preds, const FutureTrajectory& gt);
double min_fde(const PredictionSet& preds, const FutureTrajectory& gt);
/// Strict: a min_fde equal to the threshold is not a miss.
bool miss(const PredictionSet& preds, const FutureTrajectory& gt, double threshold);

/// Stationary below `stationary_distance` of net displacement from the ego's
/// current position; otherwise by the heading of the last nonzero future
/// segment relative to the ego's current heading.
MotionBucket classify_motion(const FutureTrajectory& gt, const AgentHistory& ego, const MetricConfig& cfg = {});

struct EvalItem {
  PredictionSet preds;
  FutureTrajectory gt;
  MotionBucket bucket = MotionBucket::straight;
};

/// One pooled prediction within a bucket.
struct ScoredPrediction {
  double confidence = 0.0;
  int object = 0;
  int source = 0;
  bool matches = false;
};

/// AP of one bucket with `objects` ground-truth objects. Predictions are
/// ordered by confidence descending, then object, then source index.
double average_precision(std::vector<ScoredPrediction> preds, int objects, bool soft);

struct BucketAp {
  double ap = 0.0;
  double soft_ap = 0.0;
  int count = 0;
};

struct ApResult {
  double map = 0.0;
  double soft_map = 0.0;
  std::map<MotionBucket, BucketAp> per_bucket;  // non-empty buckets only
};

ApResult mean_average_precision(const std::vector<EvalItem>& items, double threshold);

struct MetricReport {
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  double map = 0.0;
  double soft_map = 0.0;
  std::map<MotionBucket, BucketAp> per_bucket;
  int count = 0;
};

MetricReport evaluate(const std::vector<EvalItem>& items, const MetricConfig& cfg = {});

}  // namespace trajflow
