#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "oracles.hpp"
#include "trajflow/errors.hpp"
#include "trajflow/metrics.hpp"

using namespace trajflow;

namespace {

FutureTrajectory traj(std::initializer_list<std::pair<double, double>> pts) {
  FutureTrajectory t;
  t.waypoints.resize(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (auto [x, y] : pts) t.waypoints.row(i++) << x, y;
  return t;
}

PredictionSet preds_of(const std::vector<FutureTrajectory>& ts, std::vector<double> conf) {
  PredictionSet p;
  p.trajectories = ts;
  p.confidences = std::move(conf);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    p.source_indices.push_back(static_cast<int>(i));
    p.padded.push_back(0);
  }
  return p;
}

/// Ego at the origin heading along +x with one valid frame.
AgentHistory ego_at_origin() {
  AgentHistory a;
  a.states = Eigen::MatrixXd::Zero(2, kAgentStateDim);
  a.states.row(0) << -1, 0, 1, 0, 1, 0, 1;
  a.states.row(1) << 0, 0, 1, 0, 1, 0, 1;
  return a;
}

FutureTrajectory arc(double sign, int steps) {
  FutureTrajectory t;
  t.waypoints.resize(steps, 2);
  const double r = 10.0;
  for (int s = 0; s < steps; ++s) {
    const double a = (s + 1) * (std::numbers::pi / 2) / steps;
    t.waypoints.row(s) << r * std::sin(a), sign * r * (1.0 - std::cos(a));
  }
  return t;
}

}  // namespace

TEST_CASE("distance metrics on hand examples") {
  const FutureTrajectory gt = traj({{1, 0}, {2, 0}, {3, 0}});
  const FutureTrajectory shifted = traj({{4, 4}, {5, 4}, {6, 4}});
  CHECK(min_ade(preds_of({shifted, gt}, {0.9, 0.1}), gt) == 0.0);
  CHECK(min_ade(preds_of({shifted}, {0.5}), gt) == 5.0);
  CHECK(min_fde(preds_of({shifted}, {0.5}), gt) == 5.0);

  const FutureTrajectory end_off = traj({{1, 0}, {2, 0}, {3, 2}});
  CHECK_FALSE(miss(preds_of({end_off}, {0.5}), gt, 2.0));
  CHECK(miss(preds_of({end_off}, {0.5}), gt, 1.999));
}

TEST_CASE("distance metrics match the brute-force oracle") {
  Rng rng(1);
  std::vector<EvalItem> items;
  for (int i = 0; i < 1000; ++i) {
    const EvalItem it = oracle::random_item(rng, 1 + static_cast<int>(rng.index(6)), 1 + static_cast<int>(rng.index(8)));
    CHECK(min_ade(it.preds, it.gt) == oracle::min_ade(it.preds, it.gt));
    CHECK(min_fde(it.preds, it.gt) == oracle::min_fde(it.preds, it.gt));
    items.push_back(it);
  }
  const MetricReport r = evaluate(items);
  double misses = 0.0;
  for (const auto& it : items) misses += oracle::min_fde(it.preds, it.gt) > 2.0 ? 1.0 : 0.0;
  CHECK(r.miss_rate == misses / 1000.0);
  CHECK(r.count == 1000);
}

TEST_CASE("AP hand examples") {
  std::vector<ScoredPrediction> both{{0.9, 0, 0, true}, {0.8, 0, 1, true}};
  CHECK(average_precision(both, 1, false) == 1.0);
  CHECK(average_precision(both, 1, true) == 1.0);

  std::vector<ScoredPrediction> late{{0.9, 0, 0, false}, {0.8, 0, 1, true}};
  CHECK(average_precision(late, 1, false) == 0.5);
  CHECK(average_precision(late, 1, true) == 0.5);

  // Two objects: TP, FP (duplicate match), TP.
  std::vector<ScoredPrediction> dup{{0.9, 0, 0, true}, {0.8, 0, 1, true}, {0.7, 1, 0, true}};
  CHECK(average_precision(dup, 2, false) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-15));
  CHECK(average_precision(dup, 2, true) == 1.0);

  CHECK(average_precision({{0.5, 0, 0, false}}, 1, false) == 0.0);
  CHECK_THROWS_AS(average_precision({}, 0, false), DataError);
}

TEST_CASE("AP matches the PR-curve oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int objects = 1 + static_cast<int>(rng.index(4));
    const int n = 1 + static_cast<int>(rng.index(6));
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < n; ++i) {
      preds.push_back({std::round(rng.uniform() * 4.0) / 4.0, static_cast<int>(rng.index(objects)), i,
                       rng.uniform() < 0.5});
    }
    for (bool soft : {false, true}) {
      CHECK(std::abs(average_precision(preds, objects, soft) - oracle::average_precision(preds, objects, soft)) <
            1e-12);
    }
  }
}

TEST_CASE("mAP matches the oracle, soft dominates hard, ranking-only dependence") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvalItem> items;
    const int n = 1 + static_cast<int>(rng.index(12));
    for (int i = 0; i < n; ++i) items.push_back(oracle::random_item(rng, 1 + static_cast<int>(rng.index(6)), 4));
    const ApResult r = mean_average_precision(items, 2.0);
    const oracle::MapResult o = oracle::mean_average_precision(items, 2.0);
    CHECK(std::abs(r.map - o.map) < 1e-12);
    CHECK(std::abs(r.soft_map - o.soft_map) < 1e-12);
    CHECK(r.soft_map >= r.map);

    double mean_ap = 0.0;
    for (const auto& [b, ap] : r.per_bucket) mean_ap += ap.ap;
    CHECK(std::abs(r.map - mean_ap / static_cast<double>(r.per_bucket.size())) < 1e-15);

    std::vector<EvalItem> warped = items;
    for (auto& it : warped) {
      for (double& c : it.preds.confidences) c = std::exp(3.0 * c) + c * c * c;
    }
    const ApResult w = mean_average_precision(warped, 2.0);
    CHECK(w.map == r.map);
    CHECK(w.soft_map == r.soft_map);
  }
}

TEST_CASE("motion buckets") {
  const AgentHistory ego = ego_at_origin();
  CHECK(classify_motion(traj({{0, 0}, {0, 0}, {0, 0}}), ego) == MotionBucket::stationary);
  CHECK(classify_motion(traj({{0.3, 0}, {0.5, 0.2}, {0.6, 0.3}}), ego) == MotionBucket::stationary);
  CHECK(classify_motion(traj({{1, 0}, {2, 0}, {3, 0}}), ego) == MotionBucket::straight);
  CHECK(classify_motion(arc(1.0, 8), ego) == MotionBucket::left_turn);
  CHECK(classify_motion(arc(-1.0, 8), ego) == MotionBucket::right_turn);
  // The trailing repeated point is skipped when finding the final heading.
  CHECK(classify_motion(traj({{2, 0}, {3, 2}, {3, 2}}), ego) == MotionBucket::left_turn);
  // 10 degrees stays straight, 20 degrees turns.
  const double a10 = 10.0 * std::numbers::pi / 180, a20 = 20.0 * std::numbers::pi / 180;
  CHECK(classify_motion(traj({{2, 0}, {2 + std::cos(a10), std::sin(a10)}}), ego) == MotionBucket::straight);
  CHECK(classify_motion(traj({{2, 0}, {2 + std::cos(a20), -std::sin(a20)}}), ego) == MotionBucket::right_turn);
  CHECK_THROWS_AS(classify_motion(FutureTrajectory{Eigen::MatrixXd(0, 2)}, ego), DataError);
}

TEST_CASE("empty or malformed inputs") {
  CHECK_THROWS_AS(evaluate({}), DataError);
  CHECK_THROWS_AS(mean_average_precision({}, 2.0), DataError);
  EvalItem bad;
  bad.gt = traj({{1, 0}, {2, 0}});
  bad.preds = preds_of({traj({{1, 0}})}, {0.5});
  CHECK_THROWS(evaluate({bad}));
}
