#include "trajflow/model.hpp"

#include "trajflow/errors.hpp"

namespace trajflow {

TrajFlowModel::TrajFlowModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(derive_seed(seed, 0)),
      encoder_(params_, cfg_.encoder, init_rng_),
      decoder_(params_, cfg_.decoder, cfg_.encoder.embed_dim, init_rng_) {}

TrajFlowModel::Encoded TrajFlowModel::encode(ad::Tape& tape, const SceneContext& scene) const {
  Encoded e;
  e.tokens = encoder_.encode(tape, encoder_.tokenize(tape, scene));
  e.context = decoder_.prepare(tape, e.tokens);
  return e;
}

DecoderVars TrajFlowModel::denoise(ad::Tape& tape, const Encoded& enc, const ad::Mat& yt, double t) const {
  const auto q = decoder_.build_queries(tape, tape.constant(yt), t, enc.context.center_token);
  return decoder_.decode(tape, q, enc.context);
}

DecoderOutput TrajFlowModel::denoise(const SceneContext& scene, const TrajectoryTensor& yt, FlowTime t) const {
  ad::Tape tape;
  const Encoded enc = encode(tape, scene);
  return denoise(tape, enc, yt.data, t.value()).values();
}

DenoiserFn TrajFlowModel::denoiser() const {
  return [this](const TrajectoryTensor& yt, const SceneContext& scene, FlowTime t) {
    const DecoderOutput out = denoise(scene, yt, t);
    return DenoiserResult{TrajectoryTensor(out.traj_mean), out.logits, out.rank_scores};
  };
}

DenoiserFn TrajFlowModel::bound_denoiser(const SceneContext& scene) const {
  auto tape = std::make_shared<ad::Tape>();
  auto enc = std::make_shared<Encoded>(encode(*tape, scene));
  const SceneContext* bound = &scene;
  return [this, tape, enc, bound](const TrajectoryTensor& yt, const SceneContext& ctx, FlowTime t) {
    if (&ctx != bound) return denoiser()(yt, ctx, t);
    // Decoder nodes go on a scratch tape that reads the cached encoding as constants.
    ad::Tape scratch;
    Encoded local;
    local.tokens = enc->tokens;
    local.tokens.tokens = scratch.constant(enc->tokens.tokens.value());
    local.context.keys_in = scratch.constant(enc->context.keys_in.value());
    local.context.values_in = scratch.constant(enc->context.values_in.value());
    local.context.center_token = scratch.constant(enc->context.center_token.value());
    local.context.cross_mask = enc->context.cross_mask;
    const DecoderOutput out = denoise(scratch, local, yt.data, t.value()).values();
    return DenoiserResult{TrajectoryTensor(out.traj_mean), out.logits, out.rank_scores};
  };
}

void TrajFlowModel::copy_weights_from(const TrajFlowModel& other) {
  for (ad::Parameter* p : params_.all()) {
    const ad::Parameter& src = other.params().get(p->name);
    if (src.value.rows() != p->value.rows() || src.value.cols() != p->value.cols()) {
      throw DimensionError("copy_weights_from: shape mismatch for " + p->name);
    }
    p->value = src.value;
  }
}

}  // namespace trajflow
