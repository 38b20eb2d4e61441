#pragma once

#include <Eigen/Dense>

#include "trajflow/autodiff.hpp"
#include "trajflow/decoder.hpp"
#include "trajflow/normalizer.hpp"
#include "trajflow/ranking.hpp"
#include "trajflow/selection.hpp"

namespace trajflow {

enum class RegressionMode { l2, gmm_nll };

RegressionMode regression_mode_from_string(const std::string& s);
std::string to_string(RegressionMode m);

struct LossConfig {
  RegressionMode mode = RegressionMode::gmm_nll;
  double rank_weight = 0.1;        // lambda
  bool rank_on_logits = false;     // feed S instead of r to the PL loss
  NmsConfig nms;
};

struct LossBreakdown {
  double l_flow = 0.0;
  double l_cls = 0.0;
  double l_rank = 0.0;
  double total = 0.0;
  int best_index = 0;
};

/// k*: the NMS survivor (endpoints compared in scene units via `norm`) whose
/// mean trajectory has the smallest summed squared distance to `gt`. All
/// trajectories here are normalized, interleaved rows. Ties go to the lower
/// index. K is capped at N_q.
int select_best(const Eigen::MatrixXd& traj_mean, const Eigen::VectorXd& logits, const Eigen::RowVectorXd& gt,
                const NmsConfig& nms, const Normalizer& norm = {});

/// Summed per-waypoint bivariate Gaussian NLL of `gt` under one row of
/// activated GMM parameters (mu_x, mu_y, log sigma_x, log sigma_y, rho).
double gmm_nll(const Eigen::RowVectorXd& params, const Eigen::RowVectorXd& gt);

// Tape versions; each returns a 1 x 1 node.
ad::Var flow_regression_loss(const DecoderVars& out, const Eigen::RowVectorXd& gt, int best, RegressionMode mode);
ad::Var classification_loss(ad::Var logits, int best);
ad::Var ranking_loss(ad::Var scores, const Ranking& order);

struct LossTerms {
  ad::Var flow;
  ad::Var cls;
  ad::Var rank;
  ad::Var total;
  int best_index = 0;

  LossBreakdown values() const;
};

LossTerms total_loss(const DecoderVars& out, const Eigen::RowVectorXd& gt, const LossConfig& cfg,
                     const Normalizer& norm = {});

// Plain-value conveniences.
double flow_regression_loss(const DecoderOutput& out, const Eigen::RowVectorXd& gt, int best, RegressionMode mode);
double classification_loss(const Eigen::VectorXd& logits, int best);
LossBreakdown total_loss(const DecoderOutput& out, const Eigen::RowVectorXd& gt, const LossConfig& cfg,
                         const Normalizer& norm = {});

}  // namespace trajflow
