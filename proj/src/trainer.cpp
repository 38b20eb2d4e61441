#include "trajflow/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "trajflow/errors.hpp"

namespace trajflow {

using ad::Mat;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) throw ConfigError("peak_lr must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (lr_schedule != "linear" && lr_schedule != "constant") throw ConfigError("lr_schedule must be linear or constant");
  if (!(lambda_rank >= 0.0)) throw ConfigError("lambda_rank must be >= 0");
  if (!(sc_probability >= 0.0 && sc_probability <= 1.0)) throw ConfigError("sc_probability must be in [0, 1]");
  if (time_schedule != "uniform" && time_schedule != "beta") throw ConfigError("time_schedule must be uniform or beta");
  if (!(time_alpha > 0.0 && time_beta > 0.0)) throw ConfigError("time_alpha and time_beta must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (nms.k < 1 || nms.k > model.decoder.n_queries) throw ConfigError("nms_k must be in [1, n_queries]");
  if (!(nms.threshold >= 0.0)) throw ConfigError("nms_threshold must be >= 0");
  if (!(metrics.miss_threshold >= 0.0)) throw ConfigError("miss_threshold must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must be in [0, 1)");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw ConfigError("data_fraction must be in (0, 1]");
  if (!(ablation_data_fraction > 0.0 && ablation_data_fraction <= 1.0)) {
    throw ConfigError("ablation_data_fraction must be in (0, 1]");
  }
  if (eval_every < 0 || eval_steps < 1 || eval_scenes < 1) throw ConfigError("bad evaluation settings");
  if (ablation_steps.empty()) throw ConfigError("ablation_steps must not be empty");
  for (int s : ablation_steps) {
    if (s < 1) throw ConfigError("ablation_steps entries must be >= 1");
  }
  if (ablation_seeds < 1) throw ConfigError("ablation_seeds must be >= 1");
  if (ablation_grid != "table" && ablation_grid != "full") throw ConfigError("ablation_grid must be table or full");
  if (ablation_epochs < 0) throw ConfigError("ablation_epochs must be >= 0");
  model.validate();
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.mode = regression_mode;
  c.rank_weight = rank_loss ? lambda_rank : 0.0;
  c.rank_on_logits = rank_on_logits;
  c.nms = nms;
  return c;
}

TimeSchedule TrainConfig::schedule() const {
  TimeSchedule s;
  s.kind = time_schedule == "beta" ? TimeSchedule::Kind::beta : TimeSchedule::Kind::uniform;
  s.alpha = time_alpha;
  s.beta = time_beta;
  return s;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  KeyReader r(kv);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("peak_lr", c.peak_lr);
  r.get("weight_decay", c.weight_decay);
  r.get("lr_schedule", c.lr_schedule);
  r.get("lambda_rank", c.lambda_rank);
  r.get("sc_probability", c.sc_probability);
  r.get("seed", c.seed);
  std::string mode = to_string(c.regression_mode);
  r.get("regression_mode", mode);
  c.regression_mode = regression_mode_from_string(mode);
  r.get("rank_loss", c.rank_loss);
  r.get("rank_on_logits", c.rank_on_logits);
  r.get("time_schedule", c.time_schedule);
  r.get("time_alpha", c.time_alpha);
  r.get("time_beta", c.time_beta);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("grad_clip", c.grad_clip);
  r.get("max_steps", c.max_steps);
  r.get("nms_k", c.nms.k);
  r.get("nms_threshold", c.nms.threshold);
  r.get("miss_threshold", c.metrics.miss_threshold);
  r.get("stationary_distance", c.metrics.stationary_distance);
  r.get("turn_threshold_deg", c.metrics.turn_threshold_deg);
  r.get("holdout_fraction", c.holdout_fraction);
  r.get("data_fraction", c.data_fraction);
  r.get("eval_every", c.eval_every);
  r.get("eval_steps", c.eval_steps);
  r.get("eval_scenes", c.eval_scenes);
  r.get("ablation_steps", c.ablation_steps);
  r.get("ablation_seeds", c.ablation_seeds);
  r.get("ablation_grid", c.ablation_grid);
  r.get("ablation_data_fraction", c.ablation_data_fraction);
  r.get("ablation_epochs", c.ablation_epochs);
  EncoderConfig& e = c.model.encoder;
  r.get("encoder_layers", e.layers);
  r.get("encoder_dim", e.embed_dim);
  r.get("encoder_heads", e.heads);
  r.get("encoder_local_k", e.local_k);
  r.get("encoder_pe_frequencies", e.pe_frequencies);
  r.get("position_scale", e.position_scale);
  DecoderConfig& d = c.model.decoder;
  r.get("decoder_layers", d.layers);
  r.get("decoder_dim", d.embed_dim);
  r.get("decoder_heads", d.heads);
  r.get("n_queries", d.n_queries);
  r.get("cross_local_k", d.cross_local_k);
  r.get("time_embed_dim", d.time_embed_dim);
  r.get("future_steps", d.future_steps);
  r.get("decoder_pe_frequencies", d.pe_frequencies);
  r.finish();
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) { return from_key_values(parse_key_values(read_text(path))); }

KeyValues TrainConfig::to_key_values() const {
  const EncoderConfig& e = model.encoder;
  const DecoderConfig& d = model.decoder;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"epochs", std::to_string(epochs)},
          {"batch_size", std::to_string(batch_size)},
          {"peak_lr", format_double(peak_lr)},
          {"weight_decay", format_double(weight_decay)},
          {"lr_schedule", lr_schedule},
          {"lambda_rank", format_double(lambda_rank)},
          {"sc_probability", format_double(sc_probability)},
          {"seed", std::to_string(seed)},
          {"regression_mode", to_string(regression_mode)},
          {"rank_loss", b(rank_loss)},
          {"rank_on_logits", b(rank_on_logits)},
          {"time_schedule", time_schedule},
          {"time_alpha", format_double(time_alpha)},
          {"time_beta", format_double(time_beta)},
          {"adam_beta1", format_double(adam_beta1)},
          {"adam_beta2", format_double(adam_beta2)},
          {"adam_eps", format_double(adam_eps)},
          {"grad_clip", format_double(grad_clip)},
          {"max_steps", std::to_string(max_steps)},
          {"nms_k", std::to_string(nms.k)},
          {"nms_threshold", format_double(nms.threshold)},
          {"miss_threshold", format_double(metrics.miss_threshold)},
          {"stationary_distance", format_double(metrics.stationary_distance)},
          {"turn_threshold_deg", format_double(metrics.turn_threshold_deg)},
          {"holdout_fraction", format_double(holdout_fraction)},
          {"data_fraction", format_double(data_fraction)},
          {"eval_every", std::to_string(eval_every)},
          {"eval_steps", std::to_string(eval_steps)},
          {"eval_scenes", std::to_string(eval_scenes)},
          {"ablation_steps", join(ablation_steps)},
          {"ablation_seeds", std::to_string(ablation_seeds)},
          {"ablation_grid", ablation_grid},
          {"ablation_data_fraction", format_double(ablation_data_fraction)},
          {"ablation_epochs", std::to_string(ablation_epochs)},
          {"encoder_layers", std::to_string(e.layers)},
          {"encoder_dim", std::to_string(e.embed_dim)},
          {"encoder_heads", std::to_string(e.heads)},
          {"encoder_local_k", std::to_string(e.local_k)},
          {"encoder_pe_frequencies", std::to_string(e.pe_frequencies)},
          {"position_scale", format_double(e.position_scale)},
          {"decoder_layers", std::to_string(d.layers)},
          {"decoder_dim", std::to_string(d.embed_dim)},
          {"decoder_heads", std::to_string(d.heads)},
          {"n_queries", std::to_string(d.n_queries)},
          {"cross_local_k", std::to_string(d.cross_local_k)},
          {"time_embed_dim", std::to_string(d.time_embed_dim)},
          {"future_steps", std::to_string(d.future_steps)},
          {"decoder_pe_frequencies", std::to_string(d.pe_frequencies)}};
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::uint64_t TrainConfig::hash() const { return fnv1a(format_key_values(to_key_values())); }

TrainConfig TrainConfig::paper_defaults() {
  TrainConfig c;
  c.epochs = 40;
  c.batch_size = 80;
  c.peak_lr = 1e-4;
  c.weight_decay = 0.01;
  c.lambda_rank = 0.1;
  c.sc_probability = 0.5;
  return c;
}

// ---------------------------------------------------------------- optimizer

void AdamW::init(const ad::ParamStore& store) {
  m.clear();
  v.clear();
  for (const ad::Parameter* p : store.all()) {
    m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
  t = 0;
}

void AdamW::step(ad::ParamStore& store, double lr, const TrainConfig& cfg) {
  auto params = store.all();
  if (params.size() != m.size()) throw DimensionError("AdamW: optimizer state does not match parameters");
  ++t;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    if (p.grad.size() != p.value.size()) p.grad.setZero(p.value.rows(), p.value.cols());
    p.value *= decay;
    m[i] = b1 * m[i] + (1.0 - b1) * p.grad;
    v[i] = b2 * v[i] + (1.0 - b2) * p.grad.cwiseAbs2();
    const Mat denom = (v[i].array().sqrt() / std::sqrt(c2) + cfg.adam_eps).matrix();
    p.value -= ((lr / c1) * m[i].array() / denom.array()).matrix();
  }
}

// ---------------------------------------------------------------- training

TrainState init_training(const TrainConfig& cfg, const Normalizer& norm) {
  cfg.validate();
  TrainState s;
  s.cfg = cfg;
  s.norm = norm;
  s.model = std::make_unique<TrajFlowModel>(cfg.model, derive_seed(cfg.seed, 1));
  s.opt.init(s.model->params());
  s.rng = Rng(derive_seed(cfg.seed, 2));
  s.step = 0;
  return s;
}

SampleOutcome run_sample(const TrajFlowModel& model, const SceneRecord& record, const TrainConfig& cfg,
                         const Normalizer& norm, Rng& rng, bool backward, const SampleDraw* replay) {
  const DecoderConfig& dc = model.config().decoder;
  const FutureTrajectory& future = record.scene.future;
  if (future.steps() != dc.future_steps) {
    throw DataError("scene " + record.scene.id + ": future has " + std::to_string(future.steps()) +
                    " steps, model expects " + std::to_string(dc.future_steps));
  }
  const FutureTrajectory gt_norm = norm.normalize(future);
  const Eigen::RowVectorXd gt = flatten(gt_norm);
  const TrajectoryTensor y1 = TrajectoryTensor::broadcast(gt_norm, dc.n_queries);
  const LossConfig lc = cfg.loss_config();

  SampleOutcome out;
  if (replay != nullptr) {
    out.draw = *replay;
  } else {
    out.draw.y0 = sample_noise(rng, dc.n_queries, dc.future_steps);
    out.draw.t = sample_flow_time(rng, cfg.schedule()).value();
  }
  const double t = out.draw.t;

  ad::Tape tape;
  const TrajFlowModel::Encoded enc = model.encode(tape, record.scene.context);
  std::optional<LossTerms> first;
  auto first_pass = [&](const TrajectoryTensor& yt) {
    const DecoderVars v = model.denoise(tape, enc, yt.data, t);
    first = total_loss(v, gt, lc, norm);
    return TrajectoryTensor(v.traj_mean.value());
  };

  TrajectoryTensor input;
  if (replay == nullptr) {
    const SelfConditioning sc = self_conditioning_pass(first_pass, y1, out.draw.y0, FlowTime(t), rng,
                                                       cfg.sc_probability);
    out.draw.sc_applied = sc.applied;
    out.draw.second_input = sc.yt;
    input = sc.yt;
  } else {
    const TrajectoryTensor yt(t * y1.data + (1.0 - t) * out.draw.y0.data);
    if (out.draw.sc_applied) {
      const TrajectoryTensor pred = first_pass(yt);
      input = out.draw.second_input ? *out.draw.second_input : TrajectoryTensor(t * pred.data + (1.0 - t) * out.draw.y0.data);
    } else {
      input = out.draw.second_input ? *out.draw.second_input : yt;
    }
  }

  const DecoderVars second = model.denoise(tape, enc, input.data, t);
  const LossTerms main = total_loss(second, gt, lc, norm);
  ad::Var objective = first ? ad::add(main.total, first->total) : main.total;
  out.main = main.values();
  if (first) out.self_cond = first->values();
  out.objective = objective.scalar();
  if (!std::isfinite(out.objective)) throw NumericError("scene " + record.scene.id + ": nonfinite objective");
  if (backward) tape.backward(objective);
  return out;
}

double learning_rate(const TrainConfig& cfg, std::int64_t step, std::int64_t total) {
  if (cfg.lr_schedule == "constant" || total <= 0) return cfg.peak_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return cfg.peak_lr * std::max(0.0, 1.0 - frac);
}

StepResult train_step(TrainState& state, const std::vector<const SceneRecord*>& batch, double lr) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  ad::ParamStore& store = state.model->params();
  store.zero_grad();
  StepResult res;
  res.lr = lr;
  for (const SceneRecord* rec : batch) {
    SampleOutcome o;
    try {
      o = run_sample(*state.model, *rec, state.cfg, state.norm, state.rng, true);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(state.step) + ": " + e.what());
    }
    res.loss.l_flow += o.main.l_flow;
    res.loss.l_cls += o.main.l_cls;
    res.loss.l_rank += o.main.l_rank;
    res.loss.total += o.main.total;
    res.objective += o.objective;
    res.draws.push_back(std::move(o.draw));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  res.loss.l_flow *= inv;
  res.loss.l_cls *= inv;
  res.loss.l_rank *= inv;
  res.loss.total *= inv;
  res.objective *= inv;
  double sq = 0.0;
  for (ad::Parameter* p : store.all()) {
    p->grad *= inv;
    sq += p->grad.squaredNorm();
  }
  if (!std::isfinite(sq)) {
    throw NumericError("step " + std::to_string(state.step) + ": nonfinite gradient (loss " +
                       format_double(res.loss.total) + ")");
  }
  if (state.cfg.grad_clip > 0.0 && std::sqrt(sq) > state.cfg.grad_clip) {
    const double s = state.cfg.grad_clip / std::sqrt(sq);
    for (ad::Parameter* p : store.all()) p->grad *= s;
  }
  state.opt.step(store, lr, state.cfg);
  ++state.step;
  return res;
}

std::string log_header() { return "step,lr,l_flow,l_cls,l_rank,total,wall_ms"; }

std::string format_log_row(const LogRow& r) {
  std::ostringstream ss;
  ss << r.step << ',' << format_double(r.lr) << ',' << format_double(r.l_flow) << ',' << format_double(r.l_cls)
     << ',' << format_double(r.l_rank) << ',' << format_double(r.total) << ',' << format_double(r.wall_ms);
  return ss.str();
}

DataSplit split_dataset(const std::vector<SceneRecord>& data, double holdout_fraction, double data_fraction) {
  const auto n = data.size();
  const auto hold = static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(n)));
  if (hold >= n) throw DataError("dataset too small for the holdout split");
  const std::size_t rest = n - hold;
  const auto used = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(data_fraction * static_cast<double>(rest))));
  DataSplit s;
  s.train.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(used));
  s.holdout.assign(data.begin() + static_cast<std::ptrdiff_t>(rest), data.end());
  return s;
}

std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t train_size) {
  return static_cast<std::int64_t>((train_size + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                   static_cast<std::size_t>(cfg.batch_size));
}

std::int64_t total_steps(const TrainConfig& cfg, std::size_t train_size) {
  const std::int64_t full = steps_per_epoch(cfg, train_size) * cfg.epochs;
  return cfg.max_steps > 0 ? std::min<std::int64_t>(full, cfg.max_steps) : full;
}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainResult train(TrainState& state, const DataSplit& split, const TrainHooks& hooks, std::int64_t stop_at) {
  const TrainConfig& cfg = state.cfg;
  const std::size_t n = split.train.size();
  if (n == 0) throw DataError("train: empty training split");
  const std::int64_t spe = steps_per_epoch(cfg, n);
  const std::int64_t total = total_steps(cfg, n);
  const std::int64_t end = stop_at >= 0 ? std::min(total, stop_at) : total;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  std::vector<SceneRecord> eval_set(split.holdout.begin(),
                                    split.holdout.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                                                                split.holdout.size(),
                                                                static_cast<std::size_t>(cfg.eval_scenes))));
  TrainResult result;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order;
  std::vector<const SceneRecord*> batch;
  while (state.step < end) {
    const std::int64_t epoch = state.step / spe;
    const std::int64_t within = state.step % spe;
    if (epoch != cached_epoch) {
      order = epoch_order(cfg.seed, epoch, n);
      cached_epoch = epoch;
    }
    batch.clear();
    const std::size_t lo = static_cast<std::size_t>(within) * bs;
    for (std::size_t i = lo; i < std::min(n, lo + bs); ++i) batch.push_back(&split.train[order[i]]);

    const double lr = learning_rate(cfg, state.step, total);
    const auto t0 = std::chrono::steady_clock::now();
    const StepResult r = train_step(state, batch, lr);
    const auto t1 = std::chrono::steady_clock::now();

    LogRow row;
    row.step = state.step;
    row.lr = lr;
    row.l_flow = r.loss.l_flow;
    row.l_cls = r.loss.l_cls;
    row.l_rank = r.loss.l_rank;
    row.total = r.loss.total;
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);

    const bool epoch_done = within == spe - 1 || state.step == total;
    if (epoch_done && cfg.eval_every > 0 && !eval_set.empty() && (epoch + 1) % cfg.eval_every == 0) {
      EpochEval ev;
      ev.epoch = static_cast<int>(epoch) + 1;
      ev.report = evaluate_model(*state.model, eval_set, state.norm, cfg.eval_steps, cfg.nms, cfg.metrics,
                                 derive_seed(cfg.seed, 0x2000));
      result.evals.push_back(ev);
      if (hooks.on_epoch) hooks.on_epoch(ev);
    }
  }
  return result;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'T', 'J', 'F', 'L'};
constexpr std::uint32_t kVersion = 1;

struct Block {
  std::uint8_t kind = 0;  // 0: f64 matrix, 1: bytes
  Mat matrix;
  std::string bytes;
};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void put_name(std::string& out, const std::string& name) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
}

void put_matrix(std::string& out, const std::string& name, const Mat& m) {
  put_name(out, name);
  put<std::uint8_t>(out, 0);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
  }
}

void put_bytes(std::string& out, const std::string& name, const std::string& bytes) {
  put_name(out, name);
  put<std::uint8_t>(out, 1);
  put<std::uint64_t>(out, bytes.size());
  out += bytes;
}

const Block& need(const std::map<std::string, Block>& blocks, const std::string& name, std::uint8_t kind) {
  auto it = blocks.find(name);
  if (it == blocks.end()) throw DataError("checkpoint missing block '" + name + "'");
  if (it->second.kind != kind) throw DataError("checkpoint block '" + name + "' has the wrong kind");
  return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  const auto params = state.model->params().all();
  std::string body;
  std::uint32_t count = 0;
  auto matrix = [&](const std::string& name, const Mat& m) {
    put_matrix(body, name, m);
    ++count;
  };
  auto bytes = [&](const std::string& name, const std::string& b) {
    put_bytes(body, name, b);
    ++count;
  };
  bytes("config", format_key_values(state.cfg.to_key_values()));
  bytes("config_hash", std::to_string(state.cfg.hash()));
  bytes("step", std::to_string(state.step));
  bytes("adam_t", std::to_string(state.opt.t));
  bytes("rng", state.rng.serialize());
  Mat norm(2, 2);
  norm << state.norm.offset.x(), state.norm.offset.y(), state.norm.scale.x(), state.norm.scale.y();
  matrix("normalizer", norm);
  for (std::size_t i = 0; i < params.size(); ++i) {
    matrix("param/" + params[i]->name, params[i]->value);
    matrix("adam_m/" + params[i]->name, state.opt.m[i]);
    matrix("adam_v/" + params[i]->name, state.opt.v[i]);
  }
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, count);
  out += body;
  write_text_atomic(path, out);
}

TrainState load_checkpoint(const std::string& path) {
  const std::string in = read_text(path);
  if (in.size() < 12 || std::memcmp(in.data(), kMagic, 4) != 0) throw DataError(path + ": not a checkpoint file");
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kVersion) throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = take<std::uint32_t>(in, pos);
  std::map<std::string, Block> blocks;
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto len = take<std::uint32_t>(in, pos);
    if (pos + len > in.size()) throw DataError("checkpoint truncated");
    std::string name = in.substr(pos, len);
    pos += len;
    Block blk;
    blk.kind = take<std::uint8_t>(in, pos);
    if (blk.kind == 0) {
      const auto rows = take<std::uint64_t>(in, pos);
      const auto cols = take<std::uint64_t>(in, pos);
      if (rows * cols * sizeof(double) > in.size() - pos) throw DataError("checkpoint truncated");
      blk.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index r = 0; r < blk.matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < blk.matrix.cols(); ++c) blk.matrix(r, c) = take<double>(in, pos);
      }
    } else if (blk.kind == 1) {
      const auto n = take<std::uint64_t>(in, pos);
      if (n > in.size() - pos) throw DataError("checkpoint truncated");
      blk.bytes = in.substr(pos, n);
      pos += n;
    } else {
      throw DataError("checkpoint block '" + name + "' has unknown kind");
    }
    blocks.emplace(std::move(name), std::move(blk));
  }

  const TrainConfig cfg = TrainConfig::from_key_values(parse_key_values(need(blocks, "config", 1).bytes));
  if (std::to_string(cfg.hash()) != need(blocks, "config_hash", 1).bytes) {
    throw DataError(path + ": config hash mismatch");
  }
  const Mat& nm = need(blocks, "normalizer", 0).matrix;
  if (nm.rows() != 2 || nm.cols() != 2) throw DataError("checkpoint normalizer must be 2 x 2");
  Normalizer norm;
  norm.offset = Eigen::Vector2d(nm(0, 0), nm(0, 1));
  norm.scale = Eigen::Vector2d(nm(1, 0), nm(1, 1));

  TrainState s = init_training(cfg, norm);
  s.step = std::stoll(need(blocks, "step", 1).bytes);
  s.opt.t = std::stoll(need(blocks, "adam_t", 1).bytes);
  s.rng.deserialize(need(blocks, "rng", 1).bytes);
  const auto params = s.model->params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto load = [&](const std::string& name, Mat& dst) {
      const Mat& src = need(blocks, name, 0).matrix;
      if (src.rows() != dst.rows() || src.cols() != dst.cols()) throw DataError("checkpoint shape mismatch for " + name);
      dst = src;
    };
    load("param/" + params[i]->name, params[i]->value);
    load("adam_m/" + params[i]->name, s.opt.m[i]);
    load("adam_v/" + params[i]->name, s.opt.v[i]);
  }
  return s;
}

// ---------------------------------------------------------------- ablation

AblationResult run_ablation(const std::vector<SceneRecord>& data, const Normalizer& norm, const TrainConfig& cfg,
                            const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  const DataSplit split = split_dataset(data, cfg.holdout_fraction, cfg.ablation_data_fraction);
  if (split.holdout.empty()) throw ConfigError("ablation needs a nonempty holdout (holdout_fraction > 0)");
  std::vector<std::pair<bool, bool>> variants{{false, true}, {true, true}, {true, false}};
  if (cfg.ablation_grid == "full") variants.emplace_back(false, false);

  AblationResult result;
  for (const auto& [sc, rank] : variants) {
    std::vector<AblationRow> mean(cfg.ablation_steps.size());
    for (int s = 0; s < cfg.ablation_seeds; ++s) {
      TrainConfig c = cfg;
      c.sc_probability = sc ? cfg.sc_probability : 0.0;
      c.rank_loss = rank;
      c.seed = cfg.seed + static_cast<std::uint64_t>(s);
      c.eval_every = 0;
      if (cfg.ablation_epochs > 0) c.epochs = cfg.ablation_epochs;
      if (progress) {
        progress("train sc=" + std::string(sc ? "on" : "off") + " rank=" + (rank ? "on" : "off") +
                 " seed=" + std::to_string(c.seed));
      }
      TrainState state = init_training(c, norm);
      train(state, split);
      for (std::size_t i = 0; i < cfg.ablation_steps.size(); ++i) {
        AblationRow row;
        row.self_cond = sc;
        row.rank_loss = rank;
        row.ode_steps = cfg.ablation_steps[i];
        row.seed = c.seed;
        row.report = evaluate_model(*state.model, split.holdout, norm, row.ode_steps, c.nms, c.metrics,
                                    derive_seed(cfg.seed, 0x3000));
        result.per_seed.push_back(row);
        AblationRow& m = mean[i];
        m.self_cond = sc;
        m.rank_loss = rank;
        m.ode_steps = row.ode_steps;
        m.report.min_ade += row.report.min_ade / cfg.ablation_seeds;
        m.report.min_fde += row.report.min_fde / cfg.ablation_seeds;
        m.report.miss_rate += row.report.miss_rate / cfg.ablation_seeds;
        m.report.map += row.report.map / cfg.ablation_seeds;
        m.report.soft_map += row.report.soft_map / cfg.ablation_seeds;
        m.report.count = row.report.count;
      }
    }
    for (auto& m : mean) result.mean.push_back(m);
  }
  return result;
}

std::string ablation_csv(const std::vector<AblationRow>& rows, bool with_seed) {
  std::ostringstream ss;
  ss << "self_cond,ranking_loss,ode_steps," << (with_seed ? "seed," : "") << "min_ade,min_fde,miss_rate,map,soft_map\n";
  for (const auto& r : rows) {
    ss << (r.self_cond ? "on" : "off") << ',' << (r.rank_loss ? "on" : "off") << ',' << r.ode_steps << ',';
    if (with_seed) ss << r.seed << ',';
    ss << format_double(r.report.min_ade) << ',' << format_double(r.report.min_fde) << ','
       << format_double(r.report.miss_rate) << ',' << format_double(r.report.map) << ','
       << format_double(r.report.soft_map) << '\n';
  }
  return ss.str();
}

}  // namespace trajflow
