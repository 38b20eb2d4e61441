#pragma once

#include <vector>

#include "trajflow/autodiff.hpp"
#include "trajflow/encoder.hpp"
#include "trajflow/nn.hpp"
#include "trajflow/rng.hpp"

namespace trajflow {

/// Per-waypoint GMM parameter layout in DecoderOutput::traj_params.
constexpr int kGmmParams = 5;  // mu_x, mu_y, log sigma_x, log sigma_y, rho
constexpr double kLogSigmaMin = -4.6;
constexpr double kLogSigmaMax = 3.0;
constexpr double kRhoBound = 1.0 - 1e-4;

struct DecoderConfig {
  int layers = 2;
  int embed_dim = 128;
  int heads = 4;
  int n_queries = 8;
  int cross_local_k = 32;
  int time_embed_dim = 32;
  int future_steps = 16;
  int pe_frequencies = 8;

  void validate() const;
};

/// Plain values of one decoder evaluation.
struct DecoderOutput {
  ad::Mat traj_params;  // N_q x (T_f * 5)
  ad::Mat traj_mean;    // N_q x (T_f * 2), the mu columns of traj_params
  Eigen::VectorXd logits;
  Eigen::VectorXd rank_scores;
};

/// The same outputs as tape variables.
struct DecoderVars {
  ad::Var traj_params;
  ad::Var traj_mean;
  ad::Var logits;       // N_q x 1
  ad::Var rank_scores;  // N_q x 1

  DecoderOutput values() const;
};

/// Maps raw head outputs to GMM parameters: means pass through, log sigma is
/// clamped to [kLogSigmaMin, kLogSigmaMax], rho = kRhoBound * tanh(raw).
ad::Var gmm_activation(ad::Var raw);

std::vector<Eigen::Index> mean_columns(int future_steps);

class FlowDecoder {
 public:
  FlowDecoder(ad::ParamStore& store, const DecoderConfig& cfg, int context_dim, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }

  /// Projected context shared by every decoder call on one scene.
  struct PreparedContext {
    ad::Var keys_in;      // cat(Z_s, PE) projected inputs, m x 2D
    ad::Var values_in;    // Z_s projected, m x D
    ad::Var center_token; // raw ego token from the encoder, 1 x D_enc
    ad::AttentionMask cross_mask;
  };

  PreparedContext prepare(ad::Tape& tape, const ContextTokens& context) const;

  struct Queries {
    ad::Var tokens;  // N_q x D
    ad::Var pq;      // N_q x D
  };

  /// Q_i = MLP(cat(MLP(yt_i), PT_t, PQ_i)) with PQ_i = E_i + W z_center.
  /// `zero_pq` replaces PQ by zeros (used to isolate its contribution).
  Queries build_queries(ad::Tape& tape, ad::Var yt, double t, ad::Var center_token, bool zero_pq = false) const;

  DecoderVars decode(ad::Tape& tape, const Queries& queries, const PreparedContext& ctx) const;

 private:
  struct Block {
    nn::LayerNorm self_norm;
    nn::MultiHeadAttention self_attn;
    nn::LayerNorm cross_norm;
    nn::MultiHeadAttention cross_attn;
    nn::LayerNorm ffn_norm;
    nn::FeedForward ffn;
  };

  DecoderConfig cfg_;
  nn::Linear context_proj_;
  nn::Linear context_pe_;
  nn::Mlp traj_embed_;
  ad::Parameter* query_table_ = nullptr;
  nn::Linear center_proj_;
  nn::Mlp query_mlp_;
  std::vector<Block> blocks_;
  nn::LayerNorm out_norm_;
  nn::Mlp traj_head_;
  nn::Mlp cls_head_;
  nn::Mlp rank_head_;
};

}  // namespace trajflow
