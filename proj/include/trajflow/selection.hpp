#pragma once

#include <vector>

#include <Eigen/Dense>

#include "trajflow/scene.hpp"

namespace trajflow {

struct NmsConfig {
  int k = 6;
  double threshold = 2.5;  // endpoint distance, scene units
};

/// K selected trajectories with confidences sigmoid(S), sorted by descending
/// confidence (ties by source index).
struct PredictionSet {
  std::vector<FutureTrajectory> trajectories;
  std::vector<double> confidences;
  std::vector<int> source_indices;
  std::vector<char> padded;  // 1 when taken from the suppressed pool

  int size() const { return static_cast<int>(trajectories.size()); }
};

/// Greedy endpoint NMS. `trajectories` is N_q x (T_f * 2) interleaved in
/// scene units; `logits` are the raw mode scores S.
PredictionSet nms_select(const Eigen::MatrixXd& trajectories, const Eigen::VectorXd& logits, const NmsConfig& cfg);

/// Indices chosen by nms_select, in emission order (survivors, then padding).
std::vector<int> nms_indices(const Eigen::MatrixXd& trajectories, const Eigen::VectorXd& logits, const NmsConfig& cfg,
                             std::vector<char>* padded = nullptr);

double sigmoid(double x);

}  // namespace trajflow
