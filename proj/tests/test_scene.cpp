#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "trajflow/errors.hpp"
#include "trajflow/flowmatch.hpp"
#include "trajflow/normalizer.hpp"
#include "trajflow/scene.hpp"

using namespace trajflow;

namespace {

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_scene(const Scene& a, const Scene& b) {
  if (a.id != b.id || !same(a.future.waypoints, b.future.waypoints)) return false;
  if (!same(a.context.ego.states, b.context.ego.states)) return false;
  if (a.context.neighbors.size() != b.context.neighbors.size() || a.context.map.size() != b.context.map.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.context.neighbors.size(); ++i) {
    if (!same(a.context.neighbors[i].states, b.context.neighbors[i].states)) return false;
  }
  for (std::size_t i = 0; i < a.context.map.size(); ++i) {
    if (!same(a.context.map[i].points, b.context.map[i].points) || a.context.map[i].valid != b.context.map[i].valid) {
      return false;
    }
  }
  return true;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double u = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + u * ab - p).norm();
}

}  // namespace

TEST_CASE("generator is deterministic for a fixed seed") {
  SceneGenConfig cfg;
  CHECK(same_scene(generate_scene(7, cfg).scene, generate_scene(7, cfg).scene));
  CHECK_FALSE(same_scene(generate_scene(7, cfg).scene, generate_scene(8, cfg).scene));
}

TEST_CASE("single straight lane without noise keeps the future on the centerline") {
  SceneGenConfig cfg;
  cfg.fork_count = 1;
  cfg.position_noise = 0.0;
  cfg.history_dropout = 0.0;
  for (bool pose : {false, true}) {
    cfg.random_pose = pose;
    const GeneratedScene g = generate_scene(3, cfg);
    double worst = 0.0;
    for (int k = 0; k < g.scene.future.steps(); ++k) {
      const Eigen::Vector2d p = g.scene.future.waypoints.row(k).transpose();
      double best = std::numeric_limits<double>::infinity();
      for (const auto& pl : g.scene.context.map) {
        if (pl.type != PolylineType::lane) continue;
        for (Eigen::Index i = 0; i + 1 < pl.points.rows(); ++i) {
          if (!pl.valid[static_cast<std::size_t>(i)] || !pl.valid[static_cast<std::size_t>(i + 1)]) continue;
          best = std::min(best, segment_distance(p, pl.points.block<1, 2>(i, 0).transpose(),
                                                 pl.points.block<1, 2>(i + 1, 0).transpose()));
        }
      }
      worst = std::max(worst, best);
    }
    CAPTURE(pose);
    CHECK(worst < 1e-9);
    // Straight ahead along +x in the ego frame.
    CHECK(g.scene.future.waypoints.col(1).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("two-way fork with equal probabilities splits evenly") {
  SceneGenConfig cfg;
  cfg.branch_probs = {0.5, 0.5};
  cfg.agent_count = 1;
  int left = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) left += generate_scene(100000 + i, cfg).branch == 0 ? 1 : 0;
  CHECK(std::abs(left / static_cast<double>(n) - 0.5) < 0.02);
}

TEST_CASE("generated scenes are ego-centric and structurally valid") {
  SceneGenConfig cfg;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Scene s = generate_scene(seed, cfg).scene;
    CHECK_NOTHROW(validate(s.context));
    const AgentHistory& ego = s.context.ego;
    const int last = ego.last_valid();
    REQUIRE(last >= 0);
    CHECK(ego.position(last).norm() == 0.0);
    CHECK(ego.heading(last) == 0.0);
    CHECK(s.context.agent_count() == cfg.agent_count);
    CHECK(static_cast<int>(s.context.map.size()) <= cfg.max_polylines);
    CHECK(s.future.steps() == cfg.future_steps);
    CHECK(s.future.waypoints.allFinite());
    for (const auto& n : s.context.neighbors) {
      for (int f = 0; f < n.frames(); ++f) {
        if (!n.valid(f)) continue;
        const double h = n.heading(f);
        CHECK(h > -std::numbers::pi);
        CHECK(h <= std::numbers::pi);
      }
    }
  }
}

TEST_CASE("re-framing is invariant to a prior rigid transform") {
  SceneGenConfig cfg;
  cfg.random_pose = false;
  const Scene base = generate_scene(21, cfg).scene;
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const double angle = rng.uniform(-3.0, 3.0);
    const Eigen::Vector2d shift(rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0));
    const Scene moved = to_ego_frame(apply_rigid_transform(base, angle, shift));
    const Scene ref = to_ego_frame(base);
    CHECK(max_abs_diff(moved.future.waypoints, ref.future.waypoints) < 1e-6);
    CHECK(max_abs_diff(moved.context.ego.states, ref.context.ego.states) < 1e-6);
    for (std::size_t i = 0; i < ref.context.neighbors.size(); ++i) {
      CHECK(max_abs_diff(moved.context.neighbors[i].states, ref.context.neighbors[i].states) < 1e-6);
    }
    for (std::size_t i = 0; i < ref.context.map.size(); ++i) {
      CHECK(max_abs_diff(moved.context.map[i].points, ref.context.map[i].points) < 1e-6);
    }
  }
}

TEST_CASE("invalid generator configs are rejected") {
  SceneGenConfig cfg;
  cfg.fork_count = 0;
  CHECK_THROWS_AS(generate_scene(1, cfg), ConfigError);
  cfg = {};
  cfg.agent_count = 0;
  CHECK_THROWS_AS(generate_scene(1, cfg), ConfigError);
  cfg = {};
  cfg.future_steps = 0;
  CHECK_THROWS_AS(generate_scene(1, cfg), ConfigError);
  cfg = {};
  cfg.branch_probs = {1.0};
  CHECK_THROWS_AS(generate_scene(1, cfg), ConfigError);
}

TEST_CASE("validate rejects padding that is not zero-filled") {
  Scene s = generate_scene(5, SceneGenConfig{}).scene;
  SceneContext ctx = s.context;
  ctx.ego.states(0, 6) = 0.0;
  ctx.ego.states(0, 0) = 1.0;
  CHECK_THROWS_AS(validate(ctx), DataError);
  ctx = s.context;
  REQUIRE(!ctx.map.empty());
  auto& pl = ctx.map.front();
  pl.valid.back() = 0;
  pl.points.row(pl.points.rows() - 1).setConstant(0.5);
  CHECK_THROWS_AS(validate(ctx), DataError);
  ctx = s.context;
  ctx.ego.states(ctx.ego.last_valid(), 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(ctx), DataError);
}

TEST_CASE("inter-mode half distance") {
  FutureTrajectory a, b, c;
  a.waypoints = Eigen::MatrixXd::Zero(2, 2);
  b.waypoints = a.waypoints;
  b.waypoints.col(1).setConstant(4.0);
  c.waypoints = a.waypoints;
  c.waypoints.col(1).setConstant(-10.0);
  CHECK(inter_mode_half_distance(std::vector<FutureTrajectory>{a, b, c}) == doctest::Approx(2.0));
  CHECK(std::isinf(inter_mode_half_distance(std::vector<FutureTrajectory>{a})));
}

// ---------------------------------------------------------------- normalizer

TEST_CASE("normalize hand example and fixed points") {
  Normalizer n;
  n.offset = Eigen::Vector2d(5.0, 5.0);
  n.scale = Eigen::Vector2d(2.0, 2.0);
  FutureTrajectory x;
  x.waypoints.resize(2, 2);
  x.waypoints << 9.0, 1.0, 5.0, 5.0;
  const FutureTrajectory y = n.normalize(x);
  CHECK(y.waypoints(0, 0) == 2.0);
  CHECK(y.waypoints(0, 1) == -2.0);
  CHECK(y.waypoints(1, 0) == 0.0);
  CHECK(y.waypoints(1, 1) == 0.0);
}

TEST_CASE("normalization round trip") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Normalizer n;
    n.offset = Eigen::Vector2d(rng.uniform(-50, 50), rng.uniform(-50, 50));
    n.scale = Eigen::Vector2d(rng.uniform(0.1, 30), rng.uniform(0.1, 30));
    FutureTrajectory x;
    x.waypoints = Eigen::MatrixXd::Random(16, 2) * 40.0;
    const Eigen::MatrixXd back = n.denormalize(n.normalize(x)).waypoints;
    CHECK(((back - x.waypoints).cwiseAbs().array() <= 1e-9 * x.waypoints.cwiseAbs().array().max(1.0)).all());
    const Eigen::MatrixXd flat = n.denormalize_flat(n.normalize_flat(Eigen::MatrixXd(flatten(x))));
    CHECK((flat - Eigen::MatrixXd(flatten(x))).cwiseAbs().maxCoeff() < 1e-9 * 40.0);
  }
}

namespace {

double coverage_of(const Normalizer& n, const std::vector<FutureTrajectory>& data) {
  std::size_t inside = 0;
  std::size_t total = 0;
  for (const auto& t : data) {
    const auto y = n.normalize(t).waypoints;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      inside += std::abs(y.data()[i]) <= 1.0 ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("fit_normalizer meets its coverage postcondition") {
  SUBCASE("data already in [-1, 1]") {
    Rng rng(1);
    std::vector<FutureTrajectory> data(20);
    for (auto& t : data) {
      t.waypoints.resize(8, 2);
      for (Eigen::Index i = 0; i < t.waypoints.size(); ++i) t.waypoints.data()[i] = rng.uniform(-1.0, 1.0);
    }
    const Normalizer n = fit_normalizer(data, 1.0);
    CHECK(coverage_of(n, data) == 1.0);
    CHECK((n.scale.array() > 0.0).all());
  }
  SUBCASE("uniform [0, 10] with full coverage") {
    Rng rng(2);
    std::vector<FutureTrajectory> data(50);
    for (auto& t : data) {
      t.waypoints.resize(16, 2);
      for (Eigen::Index i = 0; i < t.waypoints.size(); ++i) t.waypoints.data()[i] = rng.uniform(0.0, 10.0);
    }
    const Normalizer n = fit_normalizer(data, 1.0);
    for (const auto& t : data) CHECK(n.normalize(t).waypoints.cwiseAbs().maxCoeff() <= 1.0);
  }
  SUBCASE("random coverages on heavy-tailed data") {
    Rng rng(3);
    for (double coverage : {0.6, 0.9, 0.99, 0.999}) {
      std::vector<FutureTrajectory> data(40);
      for (auto& t : data) {
        t.waypoints.resize(10, 2);
        for (Eigen::Index i = 0; i < t.waypoints.size(); ++i) {
          const double z = rng.normal();
          t.waypoints.data()[i] = 3.0 + z * z * z;
        }
      }
      CAPTURE(coverage);
      CHECK(coverage_of(fit_normalizer(data, coverage), data) >= coverage);
    }
  }
  SUBCASE("single point clamps the scale") {
    FutureTrajectory t;
    t.waypoints = Eigen::MatrixXd::Constant(1, 2, 3.0);
    const Normalizer n = fit_normalizer({t}, 1.0);
    CHECK(n.scale.x() == Normalizer::kMinScale);
    CHECK(n.scale.y() == Normalizer::kMinScale);
    CHECK(n.normalize(t).waypoints.allFinite());
  }
}

TEST_CASE("fit_normalizer argument errors") {
  CHECK_THROWS_AS(fit_normalizer({}, 0.9), DataError);
  FutureTrajectory t;
  t.waypoints = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(fit_normalizer({t}, 0.5), ConfigError);
  CHECK_THROWS_AS(fit_normalizer({t}, 1.01), ConfigError);
}
