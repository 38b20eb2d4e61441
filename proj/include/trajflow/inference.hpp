#pragma once

#include <cstdint>
#include <vector>

#include "trajflow/io.hpp"
#include "trajflow/metrics.hpp"
#include "trajflow/model.hpp"
#include "trajflow/normalizer.hpp"
#include "trajflow/selection.hpp"

namespace trajflow {

/// Samples N_q proposals with `steps` Euler steps, maps them back to scene
/// units and keeps K of them by NMS.
PredictionSet predict(const TrajFlowModel& model, const SceneContext& ctx, const Normalizer& norm, int steps,
                      const NmsConfig& nms, Rng& rng);

/// Predictions for every record; record i draws its noise from
/// derive_seed(seed, i), so results do not depend on evaluation order.
std::vector<PredictionRecord> predict_all(const TrajFlowModel& model, const std::vector<SceneRecord>& records,
                                          const Normalizer& norm, int steps, const NmsConfig& nms,
                                          std::uint64_t seed);

/// Pairs predictions with ground truth by scene id. Throws DataError when a
/// prediction has no matching scene.
std::vector<EvalItem> make_eval_items(const std::vector<PredictionRecord>& preds,
                                      const std::vector<SceneRecord>& records, const MetricConfig& cfg = {});

MetricReport evaluate_model(const TrajFlowModel& model, const std::vector<SceneRecord>& records,
                            const Normalizer& norm, int steps, const NmsConfig& nms, const MetricConfig& metrics,
                            std::uint64_t seed);

}  // namespace trajflow
