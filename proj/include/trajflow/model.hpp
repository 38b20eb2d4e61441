#pragma once

#include <cstdint>
#include <memory>

#include "trajflow/autodiff.hpp"
#include "trajflow/decoder.hpp"
#include "trajflow/encoder.hpp"
#include "trajflow/flowmatch.hpp"

namespace trajflow {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;

  void validate() const {
    encoder.validate();
    decoder.validate();
  }
};

/// Encoder + flow-matching decoder: F(Y^t, C, t) -> (Y_hat^1, S, r).
class TrajFlowModel {
 public:
  TrajFlowModel(const ModelConfig& cfg, std::uint64_t seed);
  TrajFlowModel(const TrajFlowModel&) = delete;
  TrajFlowModel& operator=(const TrajFlowModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const ContextEncoder& encoder() const { return encoder_; }
  const FlowDecoder& decoder() const { return decoder_; }

  /// Encoder output plus decoder-side context projections; computed once per
  /// scene and reused by every denoiser call on that scene.
  struct Encoded {
    ContextTokens tokens;
    FlowDecoder::PreparedContext context;
  };

  Encoded encode(ad::Tape& tape, const SceneContext& scene) const;
  DecoderVars denoise(ad::Tape& tape, const Encoded& enc, const ad::Mat& yt, double t) const;

  /// One-shot evaluation on a fresh tape.
  DecoderOutput denoise(const SceneContext& scene, const TrajectoryTensor& yt, FlowTime t) const;

  /// Denoiser usable with ode_sample; encodes the context on every call.
  DenoiserFn denoiser() const;

  /// Denoiser that encodes `scene` once up front. Calls with any other
  /// context object fall back to a fresh encoding.
  DenoiserFn bound_denoiser(const SceneContext& scene) const;

  /// Copies parameter values from another model with the same configuration.
  void copy_weights_from(const TrajFlowModel& other);

 private:
  ModelConfig cfg_;
  ad::ParamStore params_;
  Rng init_rng_;
  ContextEncoder encoder_;
  FlowDecoder decoder_;
};

}  // namespace trajflow
