#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trajflow/config.hpp"
#include "trajflow/inference.hpp"
#include "trajflow/io.hpp"
#include "trajflow/losses.hpp"
#include "trajflow/metrics.hpp"
#include "trajflow/model.hpp"

namespace trajflow {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double peak_lr = 1e-3;
  double weight_decay = 0.01;
  std::string lr_schedule = "linear";  // linear | constant
  double lambda_rank = 0.1;
  double sc_probability = 0.5;
  std::uint64_t seed = 0;
  RegressionMode regression_mode = RegressionMode::gmm_nll;
  bool rank_loss = true;
  bool rank_on_logits = false;
  std::string time_schedule = "uniform";  // uniform | beta
  double time_alpha = 1.0;
  double time_beta = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global norm; 0 disables
  int max_steps = 0;       // 0: epochs decide

  NmsConfig nms;
  MetricConfig metrics;
  double holdout_fraction = 0.1;
  double data_fraction = 1.0;  // of the non-holdout scenes
  int eval_every = 1;          // epochs; 0 disables
  int eval_steps = 1;
  int eval_scenes = 200;

  std::vector<int> ablation_steps{1, 5, 10};
  int ablation_seeds = 3;
  std::string ablation_grid = "table";  // table: the three published variants; full: 2x2
  double ablation_data_fraction = 0.2;
  int ablation_epochs = 0;  // 0: same as epochs

  ModelConfig model;

  void validate() const;
  LossConfig loss_config() const;
  TimeSchedule schedule() const;

  static TrainConfig from_key_values(const KeyValues& kv);
  static TrainConfig from_file(const std::string& path);
  KeyValues to_key_values() const;
  /// FNV-1a over the canonical key-value text.
  std::uint64_t hash() const;

  /// The published full-scale settings, kept for reference.
  static TrainConfig paper_defaults();
};

/// AdamW with decoupled weight decay (decay applied to theta before the
/// Adam step). Moments are kept per parameter, in store order.
struct AdamW {
  std::vector<ad::Mat> m;
  std::vector<ad::Mat> v;
  std::int64_t t = 0;

  void init(const ad::ParamStore& store);
  void step(ad::ParamStore& store, double lr, const TrainConfig& cfg);
};

struct TrainState {
  TrainConfig cfg;
  Normalizer norm;
  std::unique_ptr<TrajFlowModel> model;
  AdamW opt;
  Rng rng;
  std::int64_t step = 0;
};

TrainState init_training(const TrainConfig& cfg, const Normalizer& norm);

/// Random draws of one training example; recorded so a step can be replayed
/// with the self-conditioned input held fixed.
struct SampleDraw {
  TrajectoryTensor y0;
  double t = 0.0;
  bool sc_applied = false;
  std::optional<TrajectoryTensor> second_input;
};

struct SampleOutcome {
  LossBreakdown main;
  std::optional<LossBreakdown> self_cond;
  double objective = 0.0;  // l + l_s
  SampleDraw draw;
};

/// l + l_s for one example. Draws y0, t and p_s from `rng` unless `replay` is
/// given; a replayed second_input replaces the self-conditioned input. With
/// `backward`, gradients of l + l_s are added into the parameter store.
SampleOutcome run_sample(const TrajFlowModel& model, const SceneRecord& record, const TrainConfig& cfg,
                         const Normalizer& norm, Rng& rng, bool backward, const SampleDraw* replay = nullptr);

struct StepResult {
  LossBreakdown loss;  // batch mean of the main-pass terms
  double objective = 0.0;
  double lr = 0.0;
  std::vector<SampleDraw> draws;
};

double learning_rate(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps);

/// One optimizer update on `batch`. Parameter gradients hold the batch-mean
/// gradient of l + l_s afterwards.
StepResult train_step(TrainState& state, const std::vector<const SceneRecord*>& batch, double lr);

struct LogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double l_flow = 0.0;
  double l_cls = 0.0;
  double l_rank = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

std::string log_header();
std::string format_log_row(const LogRow& r);

struct EpochEval {
  int epoch = 0;
  MetricReport report;
};

struct DataSplit {
  std::vector<SceneRecord> train;
  std::vector<SceneRecord> holdout;
};

/// The last ceil(holdout_fraction * n) records form the holdout; the first
/// floor(data_fraction * rest) of the remainder are used for training.
DataSplit split_dataset(const std::vector<SceneRecord>& data, double holdout_fraction, double data_fraction);

std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t train_size);
std::int64_t total_steps(const TrainConfig& cfg, std::size_t train_size);

struct TrainHooks {
  std::function<void(const LogRow&)> on_step;
  std::function<void(const EpochEval&)> on_epoch;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<EpochEval> evals;
};

/// Continues from state.step up to the schedule end (or `stop_at` steps).
/// Epoch order is a function of (seed, epoch), so a resumed run replays the
/// same batches.
TrainResult train(TrainState& state, const DataSplit& split, const TrainHooks& hooks = {},
                  std::int64_t stop_at = -1);

void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

struct AblationRow {
  bool self_cond = true;
  bool rank_loss = true;
  int ode_steps = 1;
  std::uint64_t seed = 0;
  MetricReport report;
};

struct AblationResult {
  std::vector<AblationRow> per_seed;
  std::vector<AblationRow> mean;  // one row per (variant, steps); seed unused
};

/// Trains each variant once per seed on the ablation fraction of the
/// training split and evaluates on the holdout at every ODE step count.
AblationResult run_ablation(const std::vector<SceneRecord>& data, const Normalizer& norm, const TrainConfig& cfg,
                            const std::function<void(const std::string&)>& progress = {});

std::string ablation_csv(const std::vector<AblationRow>& rows, bool with_seed);

}  // namespace trajflow
