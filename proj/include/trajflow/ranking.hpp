#pragma once

#include <vector>

#include <Eigen/Dense>

#include "trajflow/rng.hpp"

namespace trajflow {

/// A best-first permutation of [0, N_q).
struct Ranking {
  std::vector<int> order;

  bool is_permutation() const;
};

/// Sorts proposals by ascending squared displacement d_k = ||pred_k - gt||^2
/// (rows of `preds` against the row vector `gt`); ties keep the lower index.
Ranking ground_truth_ranking(const Eigen::MatrixXd& preds, const Eigen::RowVectorXd& gt);

/// Same ordering rule applied to precomputed distances.
Ranking rank_by_distance(const Eigen::VectorXd& distances);

/// log p_PL(order | scores) = sum_k [ r_{o(k)} - logsumexp_{j >= k} r_{o(j)} ].
double pl_log_likelihood(const Eigen::VectorXd& scores, const Ranking& order);

/// Negative log-likelihood and its gradient with respect to the scores.
struct PlLoss {
  double value = 0.0;
  Eigen::VectorXd grad;
};

PlLoss pl_nll_loss(const Eigen::VectorXd& scores, const Ranking& order);

/// Sequential sampling without replacement from softmax of remaining scores.
Ranking pl_sample(const Eigen::VectorXd& scores, Rng& rng);

}  // namespace trajflow
