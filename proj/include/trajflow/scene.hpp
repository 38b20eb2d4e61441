#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace trajflow {

/// Per-frame agent state layout: x, y, vx, vy, cos(heading), sin(heading), valid.
constexpr int kAgentStateDim = 7;
/// Per-point map layout: x, y, dx, dy, then a one-hot over PolylineType.
constexpr int kMapPointDim = 8;
constexpr int kTrajDim = 2;

enum class AgentType { vehicle, pedestrian, cyclist };
enum class PolylineType { lane, sidewalk, crosswalk, edge };

std::string to_string(AgentType t);
std::string to_string(PolylineType t);
AgentType agent_type_from_string(const std::string& s);
PolylineType polyline_type_from_string(const std::string& s);

struct AgentHistory {
  Eigen::MatrixXd states;  // T_p x kAgentStateDim
  AgentType type = AgentType::vehicle;

  int frames() const { return static_cast<int>(states.rows()); }
  bool valid(int frame) const { return states(frame, 6) > 0.5; }
  /// Index of the last valid frame, or -1 when none.
  int last_valid() const;
  Eigen::Vector2d position(int frame) const { return states.block<1, 2>(frame, 0).transpose(); }
  double heading(int frame) const;
};

struct Polyline {
  Eigen::MatrixXd points;   // D_p x kMapPointDim, invalid rows zero-filled
  std::vector<char> valid;  // D_p
  PolylineType type = PolylineType::lane;

  bool any_valid() const;
  Eigen::Vector2d centroid() const;
};

struct SceneContext {
  AgentHistory ego;
  std::vector<AgentHistory> neighbors;
  std::vector<Polyline> map;

  int agent_count() const { return 1 + static_cast<int>(neighbors.size()); }
};

struct FutureTrajectory {
  Eigen::MatrixXd waypoints;  // T_f x 2

  int steps() const { return static_cast<int>(waypoints.rows()); }
};

struct Scene {
  std::string id;
  SceneContext context;
  FutureTrajectory future;
};

/// Checks the structural invariants (shapes, finiteness, heading range,
/// zero-filled padding) and throws DataError on violation.
void validate(const SceneContext& ctx);

/// Re-expresses a world-frame scene in the ego-centric frame: ego's last
/// valid position at the origin, its heading along +x.
Scene to_ego_frame(const Scene& world);

/// Applies x -> R(angle) x + translation to every position and rotates every
/// direction/velocity/heading accordingly.
Scene apply_rigid_transform(const Scene& scene, double angle, const Eigen::Vector2d& translation);

struct SceneGenConfig {
  int fork_count = 2;                 // lane branches at the fork (>= 1)
  std::vector<double> branch_probs;   // empty: uniform
  int agent_count = 4;                // ego included
  int history_steps = 11;             // T_p
  int future_steps = 16;              // T_f
  int points_per_polyline = 16;       // D_p
  int max_polylines = 64;
  double point_spacing = 2.0;         // scene units between polyline points
  double speed_min = 0.9;             // units per step
  double speed_max = 1.5;
  double fork_distance_min = 1.0;     // distance from ego to fork, along the lane
  double fork_distance_max = 6.0;
  double turn_radius = 10.0;
  double turn_angle_deg = 60.0;
  double lane_width = 3.5;
  double position_noise = 0.05;       // std of per-step kinematic noise
  double history_dropout = 0.05;      // probability that an early history frame is invalid
  bool random_pose = true;            // random world pose before ego re-framing

  void validate() const;
};

/// A generated scene plus the generator's analytic mode geometry.
struct GeneratedScene {
  Scene scene;
  int branch = 0;                               // chosen lane branch
  std::vector<FutureTrajectory> mode_futures;  // noise-free future along each branch, ego frame
};

GeneratedScene generate_scene(std::uint64_t seed, const SceneGenConfig& config);

/// Half of the minimum pairwise mean-Euclidean distance between branch
/// futures; +inf for a single branch.
double inter_mode_half_distance(const GeneratedScene& g);
double inter_mode_half_distance(const std::vector<FutureTrajectory>& modes);

}  // namespace trajflow
