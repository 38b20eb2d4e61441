#include "trajflow/flowmatch.hpp"

#include <cmath>

#include "trajflow/errors.hpp"

namespace trajflow {

namespace {

void require_same_shape(const TrajectoryTensor& a, const TrajectoryTensor& b, const char* op) {
  if (a.data.rows() != b.data.rows() || a.data.cols() != b.data.cols()) {
    throw DimensionError(std::string(op) + ": trajectory tensor shapes differ");
  }
}

}  // namespace

FutureTrajectory TrajectoryTensor::query(int i) const {
  FutureTrajectory t;
  t.waypoints.resize(steps(), kTrajDim);
  for (int k = 0; k < steps(); ++k) {
    t.waypoints(k, 0) = data(i, 2 * k);
    t.waypoints(k, 1) = data(i, 2 * k + 1);
  }
  return t;
}

TrajectoryTensor TrajectoryTensor::broadcast(const FutureTrajectory& t, int queries) {
  return TrajectoryTensor(flatten(t).replicate(queries, 1));
}

Eigen::RowVectorXd flatten(const FutureTrajectory& t) {
  Eigen::RowVectorXd r(t.waypoints.rows() * kTrajDim);
  for (Eigen::Index k = 0; k < t.waypoints.rows(); ++k) {
    r(2 * k) = t.waypoints(k, 0);
    r(2 * k + 1) = t.waypoints(k, 1);
  }
  return r;
}

FlowTime::FlowTime(double t) : t_(t) {
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("flow time must lie in [0, 1)");
}

TrajectoryTensor sample_noise(Rng& rng, int queries, int steps) {
  if (queries < 1 || steps < 1) throw DimensionError("sample_noise: shape must be positive");
  TrajectoryTensor out(queries, steps);
  // Row-major fill order fixes the draw-to-entry mapping.
  for (Eigen::Index i = 0; i < out.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.data.cols(); ++j) out.data(i, j) = rng.normal();
  }
  return out;
}

Interpolant interpolate(const TrajectoryTensor& y0, const TrajectoryTensor& y1, FlowTime t) {
  require_same_shape(y0, y1, "interpolate");
  const double s = t.value();
  return {TrajectoryTensor((1.0 - s) * y0.data + s * y1.data), TrajectoryTensor(y1.data - y0.data)};
}

FlowTime sample_flow_time(Rng& rng, const TimeSchedule& schedule) {
  double t = 0.0;
  switch (schedule.kind) {
    case TimeSchedule::Kind::uniform:
      t = rng.uniform();
      break;
    case TimeSchedule::Kind::beta:
      if (!(schedule.alpha > 0.0 && schedule.beta > 0.0)) {
        throw ConfigError("beta time schedule needs positive parameters");
      }
      t = rng.beta(schedule.alpha, schedule.beta);
      break;
  }
  if (t >= 1.0) t = std::nextafter(1.0, 0.0);
  return FlowTime(t);
}

TrajectoryTensor velocity_from_denoised(const TrajectoryTensor& y_hat1, const TrajectoryTensor& yt, double t) {
  if (!(t < 1.0)) throw DomainError("velocity_from_denoised: t must be < 1");
  require_same_shape(y_hat1, yt, "velocity_from_denoised");
  return TrajectoryTensor((y_hat1.data - yt.data) / (1.0 - t));
}

SampleResult ode_sample(const DenoiserFn& denoiser, const SceneContext& ctx, int steps, const TrajectoryTensor& y0) {
  if (steps < 1) throw ConfigError("ode_sample: steps must be >= 1");
  SampleResult out;
  TrajectoryTensor state = y0;
  for (int n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) / steps;
    DenoiserResult r = denoiser(state, ctx, FlowTime(t));
    require_same_shape(r.trajectories, state, "ode_sample");
    const TrajectoryTensor v = velocity_from_denoised(r.trajectories, state, t);
    state.data += v.data / static_cast<double>(steps);
    out.trajectories = std::move(r.trajectories);
    out.logits = std::move(r.logits);
    out.rank_scores = std::move(r.rank_scores);
  }
  out.final_state = std::move(state);
  return out;
}

SampleResult ode_sample(const DenoiserFn& denoiser, const SceneContext& ctx, int steps, Rng& rng, int queries,
                        int future_steps) {
  if (steps < 1) throw ConfigError("ode_sample: steps must be >= 1");
  return ode_sample(denoiser, ctx, steps, sample_noise(rng, queries, future_steps));
}

SelfConditioning self_conditioning_pass(const std::function<TrajectoryTensor(const TrajectoryTensor&)>& first_pass,
                                        const TrajectoryTensor& y1, const TrajectoryTensor& y0, FlowTime t, Rng& rng,
                                        double probability, std::optional<bool> force) {
  require_same_shape(y0, y1, "self_conditioning_pass");
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw ConfigError("self-conditioning probability must be in [0, 1]");
  }
  // The draw is consumed even when forced so that rng streams stay aligned.
  const double ps = rng.uniform();
  const bool apply = force.has_value() ? *force : ps < probability;
  const double s = t.value();
  SelfConditioning out;
  out.yt = TrajectoryTensor(s * y1.data + (1.0 - s) * y0.data);
  if (!apply) return out;
  const TrajectoryTensor pred = first_pass(out.yt);
  require_same_shape(pred, y1, "self_conditioning_pass");
  out.yt = TrajectoryTensor(s * pred.data + (1.0 - s) * y0.data);
  out.applied = true;
  return out;
}

}  // namespace trajflow
