#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "trajflow/rng.hpp"
#include "trajflow/scene.hpp"

namespace trajflow {

/// A block of N_q future trajectories. Each row is one query, stored
/// interleaved as (x0, y0, x1, y1, ...), i.e. N_q x (T_f * 2).
struct TrajectoryTensor {
  Eigen::MatrixXd data;

  TrajectoryTensor() = default;
  explicit TrajectoryTensor(Eigen::MatrixXd d) : data(std::move(d)) {}
  TrajectoryTensor(int queries, int steps) : data(Eigen::MatrixXd::Zero(queries, steps * kTrajDim)) {}

  int queries() const { return static_cast<int>(data.rows()); }
  int steps() const { return static_cast<int>(data.cols() / kTrajDim); }

  FutureTrajectory query(int i) const;
  /// Repeats one trajectory across `queries` rows.
  static TrajectoryTensor broadcast(const FutureTrajectory& t, int queries);
};

Eigen::RowVectorXd flatten(const FutureTrajectory& t);

/// Flow time t in [0, 1).
class FlowTime {
 public:
  explicit FlowTime(double t);
  double value() const { return t_; }

 private:
  double t_;
};

struct TimeSchedule {
  enum class Kind { uniform, beta };
  Kind kind = Kind::uniform;
  double alpha = 1.0;
  double beta = 1.0;
};

TrajectoryTensor sample_noise(Rng& rng, int queries, int steps);

struct Interpolant {
  TrajectoryTensor yt;        // (1 - t) y0 + t y1
  TrajectoryTensor velocity;  // y1 - y0
};

Interpolant interpolate(const TrajectoryTensor& y0, const TrajectoryTensor& y1, FlowTime t);

FlowTime sample_flow_time(Rng& rng, const TimeSchedule& schedule = {});

/// (y_hat1 - yt) / (1 - t); the velocity implied by a denoised estimate.
TrajectoryTensor velocity_from_denoised(const TrajectoryTensor& y_hat1, const TrajectoryTensor& yt, double t);

/// What a denoiser returns for one call: denoised trajectories, mode logits
/// and ranking scores.
struct DenoiserResult {
  TrajectoryTensor trajectories;
  Eigen::VectorXd logits;
  Eigen::VectorXd rank_scores;
};

using DenoiserFn = std::function<DenoiserResult(const TrajectoryTensor& yt, const SceneContext& ctx, FlowTime t)>;

struct SampleResult {
  TrajectoryTensor trajectories;  // last denoised estimate
  Eigen::VectorXd logits;
  Eigen::VectorXd rank_scores;
  TrajectoryTensor final_state;   // Euler-integrated state at t = 1
};

/// Euler integration of the denoiser-implied velocity from t = 0 to 1 in
/// `steps` equal increments, starting at `y0`.
SampleResult ode_sample(const DenoiserFn& denoiser, const SceneContext& ctx, int steps, const TrajectoryTensor& y0);
/// As above with y0 drawn from `rng`.
SampleResult ode_sample(const DenoiserFn& denoiser, const SceneContext& ctx, int steps, Rng& rng, int queries,
                        int future_steps);

/// Outcome of the self-conditioning branch for one training example.
struct SelfConditioning {
  TrajectoryTensor yt;  // input for the second (loss-bearing) pass
  bool applied = false;
};

/// Runs the self-conditioning branch. With probability `probability` (or as
/// forced) calls `first_pass` on the ground-truth interpolant t*y1 + (1-t)*y0
/// and rebuilds the input from its prediction as t*pred + (1-t)*y0. The
/// prediction is consumed as a constant; the caller keeps whatever it needs
/// from the first pass for the auxiliary loss.
SelfConditioning self_conditioning_pass(const std::function<TrajectoryTensor(const TrajectoryTensor&)>& first_pass,
                                        const TrajectoryTensor& y1, const TrajectoryTensor& y0, FlowTime t, Rng& rng,
                                        double probability = 0.5, std::optional<bool> force = std::nullopt);

}  // namespace trajflow
