#include "trajflow/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "trajflow/errors.hpp"
#include "trajflow/rng.hpp"

namespace trajflow {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Eigen::Matrix2d rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

// Rigid map applied to a whole scene: position p -> R p + t, direction d -> R d.
struct RigidMap {
  Eigen::Matrix2d rot;
  Eigen::Vector2d trans;
  double angle;

  Eigen::Vector2d point(const Eigen::Vector2d& p) const { return rot * p + trans; }
  Eigen::Vector2d dir(const Eigen::Vector2d& d) const { return rot * d; }
};

void transform_agent(AgentHistory& a, const RigidMap& m) {
  for (int f = 0; f < a.frames(); ++f) {
    if (!a.valid(f)) continue;
    a.states.block<1, 2>(f, 0) = m.point(a.states.block<1, 2>(f, 0).transpose()).transpose();
    a.states.block<1, 2>(f, 2) = m.dir(a.states.block<1, 2>(f, 2).transpose()).transpose();
    // Re-derive cos/sin from the wrapped heading so that the stored pair is
    // exactly consistent with heading().
    const double h = wrap_angle(a.heading(f) + m.angle);
    a.states(f, 4) = std::cos(h);
    a.states(f, 5) = std::sin(h);
  }
}

Scene transform_scene(const Scene& s, const RigidMap& m) {
  Scene out = s;
  transform_agent(out.context.ego, m);
  for (auto& n : out.context.neighbors) transform_agent(n, m);
  for (auto& pl : out.context.map) {
    for (Eigen::Index i = 0; i < pl.points.rows(); ++i) {
      if (!pl.valid[static_cast<std::size_t>(i)]) continue;
      pl.points.block<1, 2>(i, 0) = m.point(pl.points.block<1, 2>(i, 0).transpose()).transpose();
      pl.points.block<1, 2>(i, 2) = m.dir(pl.points.block<1, 2>(i, 2).transpose()).transpose();
    }
  }
  for (Eigen::Index i = 0; i < out.future.waypoints.rows(); ++i) {
    out.future.waypoints.row(i) = m.point(out.future.waypoints.row(i).transpose()).transpose();
  }
  return out;
}

// Lane geometry in the road frame: the ego approaches along +x on y = 0 and
// reaches the fork at x = fork_s; branch b then turns by `turn` radians over
// a circular arc of radius `radius` and continues straight.
struct Branch {
  double fork_s;
  double turn;
  double radius;

  Eigen::Vector2d point(double s) const {
    if (s <= fork_s) return {s, 0.0};
    const double u = s - fork_s;
    if (turn == 0.0) return {fork_s + u, 0.0};
    const double sign = turn > 0.0 ? 1.0 : -1.0;
    const double arc = radius * std::abs(turn);
    const double phi = std::min(u, arc) / radius;
    Eigen::Vector2d p(fork_s + radius * std::sin(phi), sign * radius * (1.0 - std::cos(phi)));
    if (u > arc) p += (u - arc) * Eigen::Vector2d(std::cos(turn), std::sin(turn));
    return p;
  }

  double heading(double s) const {
    if (s <= fork_s || turn == 0.0) return 0.0;
    const double sign = turn > 0.0 ? 1.0 : -1.0;
    return sign * std::min((s - fork_s) / radius, std::abs(turn));
  }
};

Eigen::MatrixXd one_hot_points(const std::vector<Eigen::Vector2d>& pts, std::size_t begin, std::size_t count,
                               PolylineType type, int dp) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dp, kMapPointDim);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = begin + i;
    Eigen::Vector2d d;
    if (k + 1 < pts.size()) {
      d = pts[k + 1] - pts[k];
    } else {
      d = pts[k] - pts[k - 1];
    }
    const double n = d.norm();
    if (n > 0.0) d /= n;
    const auto r = static_cast<Eigen::Index>(i);
    out(r, 0) = pts[k].x();
    out(r, 1) = pts[k].y();
    out(r, 2) = d.x();
    out(r, 3) = d.y();
    out(r, 4 + static_cast<int>(type)) = 1.0;
  }
  return out;
}

// Splits a dense point sequence into fixed-size polylines, zero-padding the tail.
// Consecutive chunks share their boundary point so no segment is lost.
void append_polylines(std::vector<Polyline>& out, const std::vector<Eigen::Vector2d>& pts, PolylineType type,
                      int dp) {
  if (pts.size() < 2) return;
  const std::size_t stride = static_cast<std::size_t>(std::max(1, dp - 1));
  for (std::size_t begin = 0; begin + 1 < pts.size(); begin += stride) {
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(dp), pts.size() - begin);
    Polyline pl;
    pl.type = type;
    pl.points = one_hot_points(pts, begin, count, type, dp);
    pl.valid.assign(static_cast<std::size_t>(dp), 0);
    std::fill_n(pl.valid.begin(), count, 1);
    out.push_back(std::move(pl));
  }
}

std::vector<Eigen::Vector2d> sample_line(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double spacing) {
  const double len = (b - a).norm();
  const int n = std::max(2, static_cast<int>(std::floor(len / spacing)) + 1);
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / (n - 1)));
  return pts;
}

AgentHistory make_history(const std::vector<Eigen::Vector2d>& pos, AgentType type, const std::vector<char>& valid) {
  const int tp = static_cast<int>(pos.size());
  AgentHistory a;
  a.type = type;
  a.states = Eigen::MatrixXd::Zero(tp, kAgentStateDim);
  for (int f = 0; f < tp; ++f) {
    if (!valid[static_cast<std::size_t>(f)]) continue;
    Eigen::Vector2d v;
    if (f > 0) {
      v = pos[static_cast<std::size_t>(f)] - pos[static_cast<std::size_t>(f - 1)];
    } else {
      v = pos[1] - pos[0];
    }
    const double h = std::atan2(v.y(), v.x());
    a.states(f, 0) = pos[static_cast<std::size_t>(f)].x();
    a.states(f, 1) = pos[static_cast<std::size_t>(f)].y();
    a.states(f, 2) = v.x();
    a.states(f, 3) = v.y();
    a.states(f, 4) = std::cos(h);
    a.states(f, 5) = std::sin(h);
    a.states(f, 6) = 1.0;
  }
  return a;
}

}  // namespace

std::string to_string(AgentType t) {
  switch (t) {
    case AgentType::vehicle: return "vehicle";
    case AgentType::pedestrian: return "pedestrian";
    case AgentType::cyclist: return "cyclist";
  }
  return "vehicle";
}

std::string to_string(PolylineType t) {
  switch (t) {
    case PolylineType::lane: return "lane";
    case PolylineType::sidewalk: return "sidewalk";
    case PolylineType::crosswalk: return "crosswalk";
    case PolylineType::edge: return "edge";
  }
  return "lane";
}

AgentType agent_type_from_string(const std::string& s) {
  if (s == "vehicle") return AgentType::vehicle;
  if (s == "pedestrian") return AgentType::pedestrian;
  if (s == "cyclist") return AgentType::cyclist;
  throw DataError("unknown agent type: " + s);
}

PolylineType polyline_type_from_string(const std::string& s) {
  if (s == "lane") return PolylineType::lane;
  if (s == "sidewalk") return PolylineType::sidewalk;
  if (s == "crosswalk") return PolylineType::crosswalk;
  if (s == "edge") return PolylineType::edge;
  throw DataError("unknown polyline type: " + s);
}

int AgentHistory::last_valid() const {
  for (int f = frames() - 1; f >= 0; --f) {
    if (valid(f)) return f;
  }
  return -1;
}

double AgentHistory::heading(int frame) const { return std::atan2(states(frame, 5), states(frame, 4)); }

bool Polyline::any_valid() const {
  return std::any_of(valid.begin(), valid.end(), [](char v) { return v != 0; });
}

Eigen::Vector2d Polyline::centroid() const {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  int n = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    c += points.block<1, 2>(static_cast<Eigen::Index>(i), 0).transpose();
    ++n;
  }
  return n > 0 ? Eigen::Vector2d(c / n) : c;
}

void validate(const SceneContext& ctx) {
  auto check_agent = [](const AgentHistory& a, const std::string& what) {
    if (a.states.rows() < 1 || a.states.cols() != kAgentStateDim) {
      throw DataError(what + ": history must be T_p x 7 with T_p >= 1");
    }
    for (int f = 0; f < a.frames(); ++f) {
      if (a.valid(f)) {
        if (!a.states.row(f).allFinite()) throw DataError(what + ": nonfinite state in a valid frame");
      } else if (!a.states.row(f).isZero()) {
        throw DataError(what + ": invalid frame is not zero-filled");
      }
    }
  };
  check_agent(ctx.ego, "ego");
  if (ctx.ego.last_valid() < 0) throw DataError("ego: no valid history frame");
  const int tp = ctx.ego.frames();
  for (const auto& n : ctx.neighbors) {
    check_agent(n, "neighbor");
    if (n.frames() != tp) throw DataError("neighbor: history length differs from ego");
  }
  int dp = -1;
  for (const auto& pl : ctx.map) {
    if (pl.points.cols() != kMapPointDim || static_cast<std::size_t>(pl.points.rows()) != pl.valid.size()) {
      throw DataError("map: polyline must be D_p x 8 with a D_p validity mask");
    }
    if (dp >= 0 && pl.points.rows() != dp) throw DataError("map: polylines differ in point count");
    dp = static_cast<int>(pl.points.rows());
    for (Eigen::Index i = 0; i < pl.points.rows(); ++i) {
      const bool v = pl.valid[static_cast<std::size_t>(i)] != 0;
      if (v && !pl.points.row(i).allFinite()) throw DataError("map: nonfinite point");
      if (!v && !pl.points.row(i).isZero()) throw DataError("map: padded point is not zero-filled");
    }
  }
}

Scene to_ego_frame(const Scene& world) {
  const AgentHistory& ego = world.context.ego;
  const int last = ego.last_valid();
  if (last < 0) throw DataError("to_ego_frame: ego has no valid frame");
  const Eigen::Vector2d origin = ego.position(last);
  const double h = ego.heading(last);
  RigidMap m{rotation(-h), Eigen::Vector2d::Zero(), -h};
  m.trans = -(m.rot * origin);
  Scene out = transform_scene(world, m);
  // Pin the ego anchor exactly; rotation round-off would otherwise leave ~1e-15.
  out.context.ego.states(last, 0) = 0.0;
  out.context.ego.states(last, 1) = 0.0;
  out.context.ego.states(last, 4) = 1.0;
  out.context.ego.states(last, 5) = 0.0;
  return out;
}

Scene apply_rigid_transform(const Scene& scene, double angle, const Eigen::Vector2d& translation) {
  return transform_scene(scene, RigidMap{rotation(angle), translation, angle});
}

void SceneGenConfig::validate() const {
  if (fork_count < 1) throw ConfigError("fork_count must be >= 1");
  if (agent_count < 1) throw ConfigError("agent_count must be >= 1");
  if (history_steps < 2) throw ConfigError("history_steps must be >= 2");
  if (future_steps < 1) throw ConfigError("future_steps must be >= 1");
  if (points_per_polyline < 2) throw ConfigError("points_per_polyline must be >= 2");
  if (max_polylines < 1) throw ConfigError("max_polylines must be >= 1");
  if (!(point_spacing > 0.0) || !(turn_radius > 0.0) || !(lane_width > 0.0)) {
    throw ConfigError("spacing, radius and lane width must be positive");
  }
  if (!(speed_min > 0.0) || speed_max < speed_min) throw ConfigError("speed range must be positive and ordered");
  if (fork_distance_min < 0.0 || fork_distance_max < fork_distance_min) {
    throw ConfigError("fork distance range must be nonnegative and ordered");
  }
  if (position_noise < 0.0) throw ConfigError("position_noise must be nonnegative");
  if (history_dropout < 0.0 || history_dropout >= 1.0) throw ConfigError("history_dropout must be in [0, 1)");
  if (!branch_probs.empty()) {
    if (static_cast<int>(branch_probs.size()) != fork_count) {
      throw ConfigError("branch_probs must have fork_count entries");
    }
    double total = 0.0;
    for (double p : branch_probs) {
      if (p < 0.0) throw ConfigError("branch_probs must be nonnegative");
      total += p;
    }
    if (!(total > 0.0)) throw ConfigError("branch_probs must not all be zero");
  }
}

GeneratedScene generate_scene(std::uint64_t seed, const SceneGenConfig& config) {
  config.validate();
  Rng rng(seed);
  const int tp = config.history_steps;
  const int tf = config.future_steps;
  const int dp = config.points_per_polyline;

  // Branch turning angles evenly spread from left (+) to right (-).
  const double max_turn = config.turn_angle_deg * kPi / 180.0;
  const double fork_s = rng.uniform(config.fork_distance_min, config.fork_distance_max);
  std::vector<Branch> branches;
  for (int b = 0; b < config.fork_count; ++b) {
    const double frac = config.fork_count == 1 ? 0.0 : 1.0 - 2.0 * b / (config.fork_count - 1.0);
    branches.push_back(Branch{fork_s, frac * max_turn, config.turn_radius});
  }

  // Branch choice.
  std::vector<double> probs = config.branch_probs;
  if (probs.empty()) probs.assign(static_cast<std::size_t>(config.fork_count), 1.0);
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = rng.uniform() * total;
  int branch = config.fork_count - 1;
  double acc = 0.0;
  for (int b = 0; b < config.fork_count; ++b) {
    acc += probs[static_cast<std::size_t>(b)];
    if (u < acc) {
      branch = b;
      break;
    }
  }

  const double speed = rng.uniform(config.speed_min, config.speed_max);
  const double noise = config.position_noise;

  // Ego history along the approach lane, ending at the origin.
  std::vector<Eigen::Vector2d> ego_pos(static_cast<std::size_t>(tp));
  std::vector<char> ego_valid(static_cast<std::size_t>(tp), 1);
  for (int f = 0; f < tp; ++f) {
    const double s = -speed * (tp - 1 - f);
    ego_pos[static_cast<std::size_t>(f)] = Eigen::Vector2d(s + noise * rng.normal(), noise * rng.normal());
    if (f < tp / 2 && rng.uniform() < config.history_dropout) ego_valid[static_cast<std::size_t>(f)] = 0;
  }
  ego_pos.back() = Eigen::Vector2d::Zero();

  // Ground-truth future: arc-length progress with speed jitter plus a lateral
  // random walk, both scaled by position_noise.
  FutureTrajectory future;
  future.waypoints.resize(tf, 2);
  double s = 0.0;
  double lateral = 0.0;
  const Branch& chosen = branches[static_cast<std::size_t>(branch)];
  for (int k = 0; k < tf; ++k) {
    s += speed + noise * rng.normal();
    lateral += noise * rng.normal();
    const double h = chosen.heading(s);
    const Eigen::Vector2d p = chosen.point(s) + lateral * Eigen::Vector2d(-std::sin(h), std::cos(h));
    future.waypoints.row(k) = p.transpose();
  }

  std::vector<FutureTrajectory> modes;
  for (const Branch& b : branches) {
    FutureTrajectory m;
    m.waypoints.resize(tf, 2);
    for (int k = 0; k < tf; ++k) m.waypoints.row(k) = b.point(speed * (k + 1)).transpose();
    modes.push_back(std::move(m));
  }

  SceneContext ctx;
  ctx.ego = make_history(ego_pos, AgentType::vehicle, ego_valid);

  // Neighbors: followers on the ego lane, oncoming traffic, or pedestrians on
  // the sidewalk.
  const double w = config.lane_width;
  for (int n = 1; n < config.agent_count; ++n) {
    const double kind = rng.uniform();
    std::vector<Eigen::Vector2d> pos(static_cast<std::size_t>(tp));
    AgentType type = AgentType::vehicle;
    if (kind < 0.4) {
      const double v = rng.uniform(config.speed_min, config.speed_max);
      const double start = -rng.uniform(6.0, 25.0) - n;
      for (int f = 0; f < tp; ++f) {
        pos[static_cast<std::size_t>(f)] = {start - v * (tp - 1 - f) + noise * rng.normal(), noise * rng.normal()};
      }
    } else if (kind < 0.8) {
      const double v = rng.uniform(config.speed_min, config.speed_max);
      const double start = rng.uniform(-10.0, 30.0) + 0.5 * n;
      for (int f = 0; f < tp; ++f) {
        pos[static_cast<std::size_t>(f)] = {start + v * (tp - 1 - f) + noise * rng.normal(),
                                            w + noise * rng.normal()};
      }
    } else {
      type = rng.uniform() < 0.5 ? AgentType::pedestrian : AgentType::cyclist;
      const double v = type == AgentType::pedestrian ? rng.uniform(0.1, 0.4) : rng.uniform(0.4, 0.8);
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      const double y = (rng.uniform() < 0.5 ? -1.0 : 2.0) * w;
      const double start = rng.uniform(-25.0, 10.0) + 0.3 * n;
      for (int f = 0; f < tp; ++f) {
        pos[static_cast<std::size_t>(f)] = {start - dir * v * (tp - 1 - f) + noise * rng.normal(),
                                            y + noise * rng.normal()};
      }
    }
    std::vector<char> valid(static_cast<std::size_t>(tp), 1);
    for (int f = 0; f < tp - 1; ++f) {
      if (rng.uniform() < config.history_dropout) valid[static_cast<std::size_t>(f)] = 0;
    }
    ctx.neighbors.push_back(make_history(pos, type, valid));
  }

  // Map.
  const double sp = config.point_spacing;
  const double back = 30.0;
  const double branch_len = 40.0;
  std::vector<Polyline> map;
  {
    auto approach = sample_line({-back, 0.0}, {fork_s, 0.0}, sp);
    append_polylines(map, approach, PolylineType::lane, dp);
  }
  for (const Branch& b : branches) {
    std::vector<Eigen::Vector2d> pts;
    for (double u = 0.0; u <= branch_len + 1e-9; u += sp) pts.push_back(b.point(fork_s + u));
    append_polylines(map, pts, PolylineType::lane, dp);
  }
  append_polylines(map, sample_line({fork_s, w}, {-back, w}, sp), PolylineType::lane, dp);
  append_polylines(map, sample_line({-back, -0.5 * w}, {fork_s, -0.5 * w}, sp), PolylineType::edge, dp);
  append_polylines(map, sample_line({-back, 1.5 * w}, {fork_s, 1.5 * w}, sp), PolylineType::edge, dp);
  append_polylines(map, sample_line({-back, -w}, {fork_s, -w}, sp), PolylineType::sidewalk, dp);
  append_polylines(map, sample_line({-back, 2.0 * w}, {fork_s, 2.0 * w}, sp), PolylineType::sidewalk, dp);
  if (rng.uniform() < 0.3) {
    const double x = rng.uniform(-20.0, -5.0);
    append_polylines(map, sample_line({x, -w}, {x, 2.0 * w}, 0.5 * sp), PolylineType::crosswalk, dp);
  }
  if (static_cast<int>(map.size()) > config.max_polylines) {
    std::stable_sort(map.begin(), map.end(), [](const Polyline& a, const Polyline& b) {
      return a.centroid().norm() < b.centroid().norm();
    });
    map.resize(static_cast<std::size_t>(config.max_polylines));
  }
  ctx.map = std::move(map);

  Scene road_frame{"scene_" + std::to_string(seed), std::move(ctx), std::move(future)};

  GeneratedScene out;
  out.branch = branch;
  if (config.random_pose) {
    const double angle = rng.uniform(-kPi, kPi);
    const Eigen::Vector2d t(rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0));
    out.scene = to_ego_frame(apply_rigid_transform(road_frame, angle, t));
  } else {
    out.scene = to_ego_frame(road_frame);
  }

  // Mode futures in the same ego frame as the scene.
  const AgentHistory& ego = road_frame.context.ego;
  const int last = ego.last_valid();
  const double h = ego.heading(last);
  const Eigen::Matrix2d rot = rotation(-h);
  const Eigen::Vector2d origin = ego.position(last);
  for (auto& m : modes) {
    for (int k = 0; k < tf; ++k) {
      m.waypoints.row(k) = (rot * (m.waypoints.row(k).transpose() - origin)).transpose();
    }
  }
  out.mode_futures = std::move(modes);
  return out;
}

double inter_mode_half_distance(const std::vector<FutureTrajectory>& modes) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < modes.size(); ++a) {
    for (std::size_t b = a + 1; b < modes.size(); ++b) {
      const auto diff = modes[a].waypoints - modes[b].waypoints;
      best = std::min(best, diff.rowwise().norm().mean());
    }
  }
  return 0.5 * best;
}

double inter_mode_half_distance(const GeneratedScene& g) { return inter_mode_half_distance(g.mode_futures); }

}  // namespace trajflow
