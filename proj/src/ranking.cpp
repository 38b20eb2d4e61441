#include "trajflow/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trajflow/errors.hpp"

namespace trajflow {

namespace {

void check_order(const Eigen::VectorXd& scores, const Ranking& order) {
  if (static_cast<Eigen::Index>(order.order.size()) != scores.size() || !order.is_permutation()) {
    throw DimensionError("ranking is not a permutation of the score indices");
  }
  if (!scores.allFinite()) throw NumericError("ranking scores must be finite");
}

}  // namespace

bool Ranking::is_permutation() const {
  std::vector<char> seen(order.size(), 0);
  for (int i : order) {
    if (i < 0 || static_cast<std::size_t>(i) >= order.size() || seen[static_cast<std::size_t>(i)]) return false;
    seen[static_cast<std::size_t>(i)] = 1;
  }
  return true;
}

Ranking rank_by_distance(const Eigen::VectorXd& distances) {
  Ranking r;
  r.order.resize(static_cast<std::size_t>(distances.size()));
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) { return distances(a) < distances(b); });
  return r;
}

Ranking ground_truth_ranking(const Eigen::MatrixXd& preds, const Eigen::RowVectorXd& gt) {
  if (preds.rows() < 1 || preds.cols() != gt.cols()) throw DimensionError("ground_truth_ranking: shape mismatch");
  const Eigen::VectorXd d = (preds.rowwise() - gt).rowwise().squaredNorm();
  return rank_by_distance(d);
}

double pl_log_likelihood(const Eigen::VectorXd& scores, const Ranking& order) {
  return -pl_nll_loss(scores, order).value;
}

PlLoss pl_nll_loss(const Eigen::VectorXd& scores, const Ranking& order) {
  check_order(scores, order);
  const auto n = static_cast<std::size_t>(scores.size());
  // Suffix log-sum-exp over the ranked scores, accumulated from the tail.
  std::vector<double> ranked(n);
  for (std::size_t k = 0; k < n; ++k) ranked[k] = scores(order.order[k]);
  std::vector<double> suffix(n);
  double running = -std::numeric_limits<double>::infinity();
  for (std::size_t k = n; k-- > 0;) {
    const double m = std::max(running, ranked[k]);
    running = m + std::log(std::exp(running - m) + std::exp(ranked[k] - m));
    suffix[k] = running;
  }
  PlLoss out;
  out.grad = Eigen::VectorXd::Zero(scores.size());
  double ll = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ll += ranked[k] - suffix[k];
    // d/dr_{o(j)} of -[r_{o(k)} - lse_k] = softmax_k(j) for j >= k, minus 1 at j = k.
    out.grad(order.order[k]) -= 1.0;
    for (std::size_t j = k; j < n; ++j) out.grad(order.order[j]) += std::exp(ranked[j] - suffix[k]);
  }
  out.value = -ll;
  return out;
}

Ranking pl_sample(const Eigen::VectorXd& scores, Rng& rng) {
  if (scores.size() < 1) throw DimensionError("pl_sample: empty score vector");
  if (!scores.allFinite()) throw NumericError("pl_sample: scores must be finite");
  std::vector<int> remaining(static_cast<std::size_t>(scores.size()));
  std::iota(remaining.begin(), remaining.end(), 0);
  Ranking out;
  std::vector<double> w;
  while (!remaining.empty()) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i : remaining) mx = std::max(mx, scores(i));
    w.assign(remaining.size(), 0.0);
    double z = 0.0;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      w[j] = std::exp(scores(remaining[j]) - mx);
      z += w[j];
    }
    const double u = rng.uniform() * z;
    std::size_t pick = remaining.size() - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      acc += w[j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    out.order.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

}  // namespace trajflow
