#include "trajflow/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trajflow/errors.hpp"

namespace trajflow {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<int> nms_indices(const Eigen::MatrixXd& trajectories, const Eigen::VectorXd& logits, const NmsConfig& cfg,
                             std::vector<char>* padded) {
  const auto nq = static_cast<int>(trajectories.rows());
  if (logits.size() != nq) throw DimensionError("nms: logits and trajectories disagree on N_q");
  if (trajectories.cols() < 2 || trajectories.cols() % 2 != 0) throw DimensionError("nms: bad trajectory width");
  if (cfg.k < 1 || cfg.k > nq) throw ConfigError("nms: K must be in [1, N_q]");
  if (!(cfg.threshold >= 0.0)) throw ConfigError("nms: threshold must be nonnegative");

  // Score order; sigmoid is monotone so logits order suffices.
  std::vector<int> order(static_cast<std::size_t>(nq));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits(a) > logits(b); });

  const Eigen::Index last = trajectories.cols() - 2;
  std::vector<char> suppressed(static_cast<std::size_t>(nq), 0);
  std::vector<char> emitted(static_cast<std::size_t>(nq), 0);
  std::vector<int> out;
  for (int i : order) {
    if (static_cast<int>(out.size()) == cfg.k) break;
    if (suppressed[static_cast<std::size_t>(i)]) continue;
    out.push_back(i);
    emitted[static_cast<std::size_t>(i)] = 1;
    const Eigen::Vector2d end_i = trajectories.block<1, 2>(i, last).transpose();
    for (int j = 0; j < nq; ++j) {
      if (emitted[static_cast<std::size_t>(j)] || suppressed[static_cast<std::size_t>(j)]) continue;
      const Eigen::Vector2d end_j = trajectories.block<1, 2>(j, last).transpose();
      // A zero threshold disables suppression, coincident endpoints included.
      if (cfg.threshold > 0.0 && (end_i - end_j).norm() <= cfg.threshold) suppressed[static_cast<std::size_t>(j)] = 1;
    }
  }
  if (padded != nullptr) padded->assign(out.size(), 0);
  for (int i : order) {
    if (static_cast<int>(out.size()) == cfg.k) break;
    if (emitted[static_cast<std::size_t>(i)]) continue;
    out.push_back(i);
    emitted[static_cast<std::size_t>(i)] = 1;
    if (padded != nullptr) padded->push_back(1);
  }
  return out;
}

PredictionSet nms_select(const Eigen::MatrixXd& trajectories, const Eigen::VectorXd& logits, const NmsConfig& cfg) {
  std::vector<char> pad;
  std::vector<int> idx = nms_indices(trajectories, logits, cfg, &pad);
  std::vector<std::size_t> perm(idx.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    if (logits(idx[a]) != logits(idx[b])) return logits(idx[a]) > logits(idx[b]);
    return idx[a] < idx[b];
  });
  const int steps = static_cast<int>(trajectories.cols() / 2);
  PredictionSet out;
  for (std::size_t p : perm) {
    const int i = idx[p];
    FutureTrajectory t;
    t.waypoints.resize(steps, 2);
    for (int k = 0; k < steps; ++k) {
      t.waypoints(k, 0) = trajectories(i, 2 * k);
      t.waypoints(k, 1) = trajectories(i, 2 * k + 1);
    }
    out.trajectories.push_back(std::move(t));
    out.confidences.push_back(sigmoid(logits(i)));
    out.source_indices.push_back(i);
    out.padded.push_back(pad[p]);
  }
  return out;
}

}  // namespace trajflow
