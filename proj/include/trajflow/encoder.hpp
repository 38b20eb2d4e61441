#pragma once

#include <vector>

#include "trajflow/autodiff.hpp"
#include "trajflow/nn.hpp"
#include "trajflow/rng.hpp"
#include "trajflow/scene.hpp"

namespace trajflow {

struct EncoderConfig {
  int layers = 2;
  int embed_dim = 64;
  int heads = 4;
  int local_k = 8;
  int pe_frequencies = 8;
  double position_scale = 10.0;  // divides xy inputs to the token MLPs

  void validate() const;
};

/// Dense encoder inputs derived from a SceneContext. Neighbors are sorted by
/// distance to the ego (ties keep their original order) so that neighbor
/// order in the source record does not matter.
struct TokenInputs {
  ad::Mat agent_features;         // (N_a * T_p) x kAgentStateDim
  std::vector<char> agent_valid;  // N_a * T_p
  ad::Mat map_features;           // (N_m * D_p) x kMapPointDim
  std::vector<char> map_valid;    // N_m * D_p
  int history_steps = 0;
  int points_per_polyline = 0;
  int agent_count = 0;
  int polyline_count = 0;
  ad::Mat positions;              // (N_a + N_m) x 2 anchors
  std::vector<char> token_valid;  // N_a + N_m
};

TokenInputs prepare_inputs(const SceneContext& scene, const EncoderConfig& cfg);

/// Context tokens Z_s: agents first (ego at row 0), then polylines.
struct ContextTokens {
  ad::Var tokens;
  ad::Mat positions;
  std::vector<char> valid;
  int agent_count = 0;

  int size() const { return static_cast<int>(valid.size()); }
};

/// For each token, the indices of its `k` nearest valid tokens by anchor
/// distance, ascending; ties go to the lower index. Invalid tokens get an
/// empty set.
std::vector<std::vector<int>> local_neighbors(const ad::Mat& positions, const std::vector<char>& valid, int k);

ad::AttentionMask neighbor_mask(const std::vector<std::vector<int>>& neighbors, int keys);

class ContextEncoder {
 public:
  ContextEncoder(ad::ParamStore& store, const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  /// Per-element MLP followed by a masked max-pool over time (agents) or
  /// points (polylines). Feature matrices are passed as tape variables so
  /// that input sensitivities can be inspected.
  ContextTokens tokenize(ad::Tape& tape, const TokenInputs& in, ad::Var agent_features, ad::Var map_features) const;
  ContextTokens tokenize(ad::Tape& tape, const SceneContext& scene) const;

  /// Stacked pre-norm transformer blocks with local self-attention.
  ContextTokens encode(ad::Tape& tape, const ContextTokens& tokens) const;

 private:
  struct Block {
    nn::LayerNorm attn_norm;
    nn::MultiHeadAttention attn;
    nn::LayerNorm ffn_norm;
    nn::FeedForward ffn;
  };

  EncoderConfig cfg_;
  nn::Mlp agent_mlp_;
  nn::Mlp map_mlp_;
  nn::Linear pe_proj_;
  std::vector<Block> blocks_;
  nn::LayerNorm out_norm_;
};

}  // namespace trajflow
