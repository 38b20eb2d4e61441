#include "trajflow/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "trajflow/errors.hpp"

namespace trajflow {

void DecoderConfig::validate() const {
  if (layers < 0) throw ConfigError("decoder layers must be >= 0");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
    throw ConfigError("decoder embed_dim must be positive and divisible by heads");
  }
  if (n_queries < 1) throw ConfigError("decoder n_queries must be >= 1");
  if (cross_local_k < 1) throw ConfigError("decoder cross_local_k must be >= 1");
  if (time_embed_dim <= 0 || time_embed_dim % 2 != 0) {
    throw ConfigError("decoder time_embed_dim must be positive and even");
  }
  if (future_steps < 1) throw ConfigError("decoder future_steps must be >= 1");
  if (pe_frequencies < 1) throw ConfigError("decoder pe_frequencies must be >= 1");
}

DecoderOutput DecoderVars::values() const {
  return {traj_params.value(), traj_mean.value(), logits.value().col(0), rank_scores.value().col(0)};
}

ad::Var gmm_activation(ad::Var raw) {
  if (raw.cols() % kGmmParams != 0) throw DimensionError("gmm_activation: width must be a multiple of 5");
  ad::Tape* tape = raw.tape;
  const ad::Mat& r = raw.value();
  ad::Mat out = r;
  ad::Mat deriv = ad::Mat::Ones(r.rows(), r.cols());
  for (Eigen::Index c = 0; c < r.cols(); ++c) {
    const auto slot = c % kGmmParams;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      if (slot == 2 || slot == 3) {
        const double v = r(i, c);
        out(i, c) = std::clamp(v, kLogSigmaMin, kLogSigmaMax);
        deriv(i, c) = (v > kLogSigmaMin && v < kLogSigmaMax) ? 1.0 : 0.0;
      } else if (slot == 4) {
        const double th = std::tanh(r(i, c));
        out(i, c) = kRhoBound * th;
        deriv(i, c) = kRhoBound * (1.0 - th * th);
      }
    }
  }
  return tape->record(std::move(out), {raw},
                      [tape, raw, deriv](const ad::Mat& g) { tape->accumulate(raw.id, g.cwiseProduct(deriv)); });
}

std::vector<Eigen::Index> mean_columns(int future_steps) {
  std::vector<Eigen::Index> cols;
  for (int k = 0; k < future_steps; ++k) {
    cols.push_back(k * kGmmParams);
    cols.push_back(k * kGmmParams + 1);
  }
  return cols;
}

FlowDecoder::FlowDecoder(ad::ParamStore& store, const DecoderConfig& cfg, int context_dim, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.embed_dim;
  const int traj_in = cfg_.future_steps * kTrajDim;
  context_proj_ = nn::Linear::create(store, "decoder.context_proj", context_dim, d, rng);
  context_pe_ = nn::Linear::create(store, "decoder.context_pe", 4 * cfg_.pe_frequencies, d, rng);
  traj_embed_ = nn::Mlp::create(store, "decoder.traj_embed", {traj_in, d, d}, rng);
  {
    ad::Mat table(cfg_.n_queries, d);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = rng.normal();
    query_table_ = &store.add("decoder.query_table", std::move(table));
  }
  center_proj_ = nn::Linear::create(store, "decoder.center_proj", context_dim, d, rng);
  query_mlp_ = nn::Mlp::create(store, "decoder.query_mlp", {d + cfg_.time_embed_dim + d, d, d}, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    blocks_.push_back(Block{
        nn::LayerNorm::create(store, p + ".self_norm", d),
        nn::MultiHeadAttention::create(store, p + ".self_attn", d, d, d, d, cfg_.heads, rng),
        nn::LayerNorm::create(store, p + ".cross_norm", d),
        nn::MultiHeadAttention::create(store, p + ".cross_attn", 2 * d, 2 * d, d, d, cfg_.heads, rng),
        nn::LayerNorm::create(store, p + ".ffn_norm", d),
        nn::FeedForward::create(store, p + ".ffn", d, 4 * d, rng),
    });
  }
  out_norm_ = nn::LayerNorm::create(store, "decoder.out_norm", d);
  traj_head_ = nn::Mlp::create(store, "decoder.traj_head", {d, d, d, cfg_.future_steps * kGmmParams}, rng);
  cls_head_ = nn::Mlp::create(store, "decoder.cls_head", {d, d, d, 1}, rng);
  rank_head_ = nn::Mlp::create(store, "decoder.rank_head", {d, d, d, 1}, rng);
}

FlowDecoder::PreparedContext FlowDecoder::prepare(ad::Tape& tape, const ContextTokens& context) const {
  PreparedContext out;
  const int m = context.size();
  out.values_in = context_proj_(tape, context.tokens);
  ad::Var pe = context_pe_(tape, tape.constant(nn::location_embedding(context.positions, cfg_.pe_frequencies)));
  out.keys_in = ad::concat_cols({out.values_in, pe});
  out.center_token = ad::slice_rows(context.tokens, 0, 1);

  // Keys: the cross_local_k valid context tokens nearest the center agent's
  // last observed position (token 0's anchor), identical for every query.
  std::vector<std::pair<double, int>> dist;
  for (int j = 0; j < m; ++j) {
    if (!context.valid[static_cast<std::size_t>(j)]) continue;
    dist.emplace_back((context.positions.row(j) - context.positions.row(0)).squaredNorm(), j);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(cfg_.cross_local_k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  out.cross_mask = ad::AttentionMask::Zero(cfg_.n_queries, m);
  for (std::size_t r = 0; r < take; ++r) out.cross_mask.col(dist[r].second).setOnes();
  return out;
}

FlowDecoder::Queries FlowDecoder::build_queries(ad::Tape& tape, ad::Var yt, double t, ad::Var center_token,
                                                bool zero_pq) const {
  if (yt.rows() != cfg_.n_queries || yt.cols() != cfg_.future_steps * kTrajDim) {
    throw DimensionError("build_queries: yt must be N_q x (T_f * 2)");
  }
  const int d = cfg_.embed_dim;
  Queries q;
  if (zero_pq) {
    q.pq = tape.constant(ad::Mat::Zero(cfg_.n_queries, d));
  } else {
    ad::Var center = center_proj_(tape, center_token);
    q.pq = ad::add_row(tape.param(*query_table_), center);
  }
  ad::Var traj = traj_embed_(tape, yt);
  ad::Var time = tape.constant(nn::time_embedding(t, cfg_.time_embed_dim).replicate(cfg_.n_queries, 1));
  q.tokens = query_mlp_(tape, ad::concat_cols({traj, time, q.pq}));
  return q;
}

DecoderVars FlowDecoder::decode(ad::Tape& tape, const Queries& queries, const PreparedContext& ctx) const {
  const ad::AttentionMask full = ad::AttentionMask::Ones(cfg_.n_queries, cfg_.n_queries);
  ad::Var q = queries.tokens;
  for (const Block& b : blocks_) {
    ad::Var h = b.self_norm(tape, q);
    ad::Var hp = ad::add(h, queries.pq);
    q = ad::add(q, b.self_attn(tape, hp, hp, h, full));
    ad::Var c = ad::concat_cols({b.cross_norm(tape, q), queries.pq});
    q = ad::add(q, b.cross_attn(tape, c, ctx.keys_in, ctx.values_in, ctx.cross_mask));
    q = ad::add(q, b.ffn(tape, b.ffn_norm(tape, q)));
  }
  q = out_norm_(tape, q);
  DecoderVars out;
  out.traj_params = gmm_activation(traj_head_(tape, q));
  out.traj_mean = ad::gather_cols(out.traj_params, mean_columns(cfg_.future_steps));
  out.logits = cls_head_(tape, q);
  out.rank_scores = rank_head_(tape, q);
  return out;
}

}  // namespace trajflow
