#include "trajflow/encoder.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "trajflow/errors.hpp"

namespace trajflow {

void EncoderConfig::validate() const {
  if (layers < 0) throw ConfigError("encoder layers must be >= 0");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
    throw ConfigError("encoder embed_dim must be positive and divisible by heads");
  }
  if (local_k < 1) throw ConfigError("encoder local_k must be >= 1");
  if (pe_frequencies < 1) throw ConfigError("encoder pe_frequencies must be >= 1");
  if (!(position_scale > 0.0)) throw ConfigError("encoder position_scale must be positive");
}

TokenInputs prepare_inputs(const SceneContext& scene, const EncoderConfig& cfg) {
  const int tp = scene.ego.frames();
  std::vector<const AgentHistory*> agents{&scene.ego};
  {
    std::vector<std::pair<double, const AgentHistory*>> keyed;
    const int ego_last = scene.ego.last_valid();
    const Eigen::Vector2d ego_pos = ego_last >= 0 ? scene.ego.position(ego_last) : Eigen::Vector2d::Zero();
    for (const auto& n : scene.neighbors) {
      if (n.frames() != tp) throw DataError("neighbor history length differs from ego");
      const int last = n.last_valid();
      const double d = last >= 0 ? (n.position(last) - ego_pos).norm() : std::numeric_limits<double>::infinity();
      keyed.emplace_back(d, &n);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [d, a] : keyed) agents.push_back(a);
  }

  TokenInputs in;
  in.history_steps = tp;
  in.agent_count = static_cast<int>(agents.size());
  in.polyline_count = static_cast<int>(scene.map.size());
  in.points_per_polyline = scene.map.empty() ? 1 : static_cast<int>(scene.map.front().points.rows());
  const int na = in.agent_count;
  const int nm = in.polyline_count;
  const int dp = in.points_per_polyline;

  in.agent_features = ad::Mat::Zero(na * tp, kAgentStateDim);
  in.agent_valid.assign(static_cast<std::size_t>(na * tp), 0);
  in.map_features = ad::Mat::Zero(nm * dp, kMapPointDim);
  in.map_valid.assign(static_cast<std::size_t>(nm * dp), 0);
  in.positions = ad::Mat::Zero(na + nm, 2);
  in.token_valid.assign(static_cast<std::size_t>(na + nm), 0);

  const double inv_scale = 1.0 / cfg.position_scale;
  for (int a = 0; a < na; ++a) {
    const AgentHistory& h = *agents[static_cast<std::size_t>(a)];
    for (int f = 0; f < tp; ++f) {
      if (!h.valid(f)) continue;
      const int r = a * tp + f;
      in.agent_features.row(r) = h.states.row(f);
      in.agent_features(r, 0) *= inv_scale;
      in.agent_features(r, 1) *= inv_scale;
      in.agent_valid[static_cast<std::size_t>(r)] = 1;
    }
    const int last = h.last_valid();
    if (last >= 0) {
      in.positions.row(a) = h.position(last).transpose();
      in.token_valid[static_cast<std::size_t>(a)] = 1;
    }
  }
  for (int m = 0; m < nm; ++m) {
    const Polyline& pl = scene.map[static_cast<std::size_t>(m)];
    if (pl.points.rows() != dp) throw DataError("polylines differ in point count");
    for (int p = 0; p < dp; ++p) {
      if (!pl.valid[static_cast<std::size_t>(p)]) continue;
      const int r = m * dp + p;
      in.map_features.row(r) = pl.points.row(p);
      in.map_features(r, 0) *= inv_scale;
      in.map_features(r, 1) *= inv_scale;
      in.map_valid[static_cast<std::size_t>(r)] = 1;
    }
    if (pl.any_valid()) {
      in.positions.row(na + m) = pl.centroid().transpose();
      in.token_valid[static_cast<std::size_t>(na + m)] = 1;
    }
  }
  return in;
}

std::vector<std::vector<int>> local_neighbors(const ad::Mat& positions, const std::vector<char>& valid, int k) {
  const int n = static_cast<int>(positions.rows());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  std::vector<int> candidates;
  for (int j = 0; j < n; ++j) {
    if (valid[static_cast<std::size_t>(j)]) candidates.push_back(j);
  }
  std::vector<std::pair<double, int>> dist;
  for (int i = 0; i < n; ++i) {
    if (!valid[static_cast<std::size_t>(i)]) continue;
    dist.clear();
    for (int j : candidates) dist.emplace_back((positions.row(i) - positions.row(j)).squaredNorm(), j);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
    auto& row = out[static_cast<std::size_t>(i)];
    for (std::size_t r = 0; r < take; ++r) row.push_back(dist[r].second);
  }
  return out;
}

ad::AttentionMask neighbor_mask(const std::vector<std::vector<int>>& neighbors, int keys) {
  ad::AttentionMask m = ad::AttentionMask::Zero(static_cast<Eigen::Index>(neighbors.size()), keys);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    for (int j : neighbors[i]) m(static_cast<Eigen::Index>(i), j) = 1;
  }
  return m;
}

ContextEncoder::ContextEncoder(ad::ParamStore& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.embed_dim;
  agent_mlp_ = nn::Mlp::create(store, "encoder.agent_mlp", {kAgentStateDim, d, d}, rng);
  map_mlp_ = nn::Mlp::create(store, "encoder.map_mlp", {kMapPointDim, d, d}, rng);
  pe_proj_ = nn::Linear::create(store, "encoder.pe_proj", 4 * cfg_.pe_frequencies, d, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    blocks_.push_back(Block{nn::LayerNorm::create(store, p + ".attn_norm", d),
                            nn::MultiHeadAttention::create(store, p + ".attn", d, d, d, d, cfg_.heads, rng),
                            nn::LayerNorm::create(store, p + ".ffn_norm", d),
                            nn::FeedForward::create(store, p + ".ffn", d, 4 * d, rng)});
  }
  out_norm_ = nn::LayerNorm::create(store, "encoder.out_norm", d);
}

ContextTokens ContextEncoder::tokenize(ad::Tape& tape, const TokenInputs& in, ad::Var agent_features,
                                       ad::Var map_features) const {
  std::vector<ad::Var> parts;
  parts.push_back(ad::masked_max_pool(agent_mlp_(tape, agent_features), in.agent_valid, in.history_steps));
  if (in.polyline_count > 0) {
    parts.push_back(ad::masked_max_pool(map_mlp_(tape, map_features), in.map_valid, in.points_per_polyline));
  }
  ContextTokens out;
  out.tokens = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  out.positions = in.positions;
  out.valid = in.token_valid;
  out.agent_count = in.agent_count;
  return out;
}

ContextTokens ContextEncoder::tokenize(ad::Tape& tape, const SceneContext& scene) const {
  const TokenInputs in = prepare_inputs(scene, cfg_);
  return tokenize(tape, in, tape.constant(in.agent_features), tape.constant(in.map_features));
}

ContextTokens ContextEncoder::encode(ad::Tape& tape, const ContextTokens& tokens) const {
  const int n = tokens.size();
  const ad::AttentionMask mask = neighbor_mask(local_neighbors(tokens.positions, tokens.valid, cfg_.local_k), n);
  ad::Var pe = pe_proj_(tape, tape.constant(nn::location_embedding(tokens.positions, cfg_.pe_frequencies)));
  ad::Var z = tokens.tokens;
  for (const Block& b : blocks_) {
    ad::Var h = b.attn_norm(tape, z);
    ad::Var hp = ad::add(h, pe);
    z = ad::add(z, b.attn(tape, hp, hp, h, mask));
    z = ad::add(z, b.ffn(tape, b.ffn_norm(tape, z)));
  }
  ContextTokens out = tokens;
  out.tokens = out_norm_(tape, z);
  return out;
}

}  // namespace trajflow
