#include "trajflow/inference.hpp"

#include <unordered_map>

#include "trajflow/errors.hpp"

namespace trajflow {

PredictionSet predict(const TrajFlowModel& model, const SceneContext& ctx, const Normalizer& norm, int steps,
                      const NmsConfig& nms, Rng& rng) {
  const DecoderConfig& dc = model.config().decoder;
  if (nms.k > dc.n_queries) throw ConfigError("K exceeds the number of decoder queries");
  const SampleResult r = ode_sample(model.bound_denoiser(ctx), ctx, steps, rng, dc.n_queries, dc.future_steps);
  return nms_select(norm.denormalize_flat(r.trajectories.data), r.logits, nms);
}

std::vector<PredictionRecord> predict_all(const TrajFlowModel& model, const std::vector<SceneRecord>& records,
                                          const Normalizer& norm, int steps, const NmsConfig& nms,
                                          std::uint64_t seed) {
  std::vector<PredictionRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    out.push_back({records[i].scene.id, predict(model, records[i].scene.context, norm, steps, nms, rng)});
  }
  return out;
}

std::vector<EvalItem> make_eval_items(const std::vector<PredictionRecord>& preds,
                                      const std::vector<SceneRecord>& records, const MetricConfig& cfg) {
  std::unordered_map<std::string, const SceneRecord*> by_id;
  for (const auto& r : records) by_id[r.scene.id] = &r;
  std::vector<EvalItem> items;
  items.reserve(preds.size());
  for (const auto& p : preds) {
    auto it = by_id.find(p.scene_id);
    if (it == by_id.end()) throw DataError("prediction for unknown scene '" + p.scene_id + "'");
    const Scene& s = it->second->scene;
    items.push_back({p.preds, s.future, classify_motion(s.future, s.context.ego, cfg)});
  }
  return items;
}

MetricReport evaluate_model(const TrajFlowModel& model, const std::vector<SceneRecord>& records,
                            const Normalizer& norm, int steps, const NmsConfig& nms, const MetricConfig& metrics,
                            std::uint64_t seed) {
  return evaluate(make_eval_items(predict_all(model, records, norm, steps, nms, seed), records, metrics), metrics);
}

}  // namespace trajflow
