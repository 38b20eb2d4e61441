#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajflow/config.hpp"
#include "trajflow/errors.hpp"
#include "trajflow/inference.hpp"
#include "trajflow/io.hpp"
#include "trajflow/plot.hpp"
#include "trajflow/trainer.hpp"

using namespace trajflow;

namespace {

enum Exit { kOk = 0, kUsage = 2, kMissingFile = 3, kMalformed = 4, kConfig = 5, kNumeric = 6 };

int fail(int code, const char* name, const std::string& message) {
  std::string escaped;
  for (char c : message) {
    if (c == '"' || c == '\\') escaped += '\\';
    escaped += c == '\n' ? ' ' : c;
  }
  std::cerr << "error code=" << name << " message=\"" << escaped << "\"\n";
  return code;
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
}

std::vector<SceneRecord> load_data(const std::string& path) {
  require_file(path);
  auto data = read_dataset(path);
  if (data.empty()) throw DataError(path + ": no records");
  return data;
}

/// The normalizer stored next to the dataset, or one fitted to it.
Normalizer dataset_normalizer(const std::string& path, const std::vector<SceneRecord>& data) {
  if (std::filesystem::exists(meta_path(path))) return read_meta(meta_path(path)).normalizer;
  std::vector<FutureTrajectory> futures;
  for (const auto& r : data) futures.push_back(r.scene.future);
  return fit_normalizer(futures, 0.999);
}

/// Config file contents; future_steps defaults to the dataset horizon.
TrainConfig load_train_config(const std::string& path, const std::vector<SceneRecord>& data) {
  KeyValues kv;
  if (!path.empty()) {
    require_file(path);
    kv = parse_key_values(read_text(path));
  }
  if (!kv.count("future_steps")) kv["future_steps"] = std::to_string(data.front().scene.future.steps());
  return TrainConfig::from_key_values(kv);
}

void check_finite(const MetricReport& r) {
  for (double v : {r.min_ade, r.min_fde, r.miss_rate, r.map, r.soft_map}) {
    if (!std::isfinite(v)) throw NumericError("nonfinite metric");
  }
}

int cmd_gen(std::uint64_t seed, int count, const std::string& out, const std::string& config) {
  if (count < 1) throw ConfigError("--count must be >= 1");
  SceneGenConfig gc;
  if (!config.empty()) {
    require_file(config);
    gc = generator_config_from_kv(parse_key_values(read_text(config)));
  }
  gc.validate();
  std::vector<SceneRecord> records;
  std::vector<FutureTrajectory> futures;
  records.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SceneRecord r = to_record(generate_scene(derive_seed(seed, static_cast<std::uint64_t>(i)), gc));
    r.scene.id = "scene_" + std::to_string(seed) + "_" + std::to_string(i);
    futures.push_back(r.scene.future);
    records.push_back(std::move(r));
  }
  DatasetMeta meta;
  meta.coverage = 0.999;
  meta.normalizer = fit_normalizer(futures, meta.coverage);
  meta.seed = seed;
  meta.count = count;
  meta.generator = gc;
  write_dataset(out, records);
  write_meta(meta_path(out), meta);
  std::cerr << "wrote " << count << " scenes to " << out << "\n";
  return kOk;
}

int cmd_train(const std::string& data_path, const std::string& config, const std::string& ckpt,
              const std::string& log_path, const std::string& resume, bool quiet) {
  const auto data = load_data(data_path);
  TrainState state;
  if (!resume.empty()) {
    require_file(resume);
    state = load_checkpoint(resume);
    if (!config.empty() && load_train_config(config, data).hash() != state.cfg.hash()) {
      throw ConfigError("--config differs from the configuration stored in " + resume);
    }
  } else {
    state = init_training(load_train_config(config, data), dataset_normalizer(data_path, data));
  }
  const DataSplit split = split_dataset(data, state.cfg.holdout_fraction, state.cfg.data_fraction);

  std::string log = log_header() + "\n";
  if (!resume.empty() && std::filesystem::exists(log_path)) log = read_text(log_path);
  TrainHooks hooks;
  hooks.on_step = [&](const LogRow& r) { log += format_log_row(r) + "\n"; };
  hooks.on_epoch = [&](const EpochEval& e) {
    if (quiet) return;
    std::fprintf(stderr, "epoch %d  minADE %.4f  minFDE %.4f  miss %.4f  mAP %.4f\n", e.epoch, e.report.min_ade,
                 e.report.min_fde, e.report.miss_rate, e.report.map);
  };
  if (!quiet) {
    std::cerr << "training on " << split.train.size() << " scenes, " << total_steps(state.cfg, split.train.size())
              << " steps, " << state.model->params().scalar_count() << " parameters\n";
  }
  train(state, split, hooks);
  save_checkpoint(ckpt, state);
  write_text_atomic(log_path, log);
  return kOk;
}

int cmd_sample(const std::string& ckpt, const std::string& data_path, int steps, int k, double threshold,
               std::uint64_t seed, const std::string& out) {
  require_file(ckpt);
  const TrainState state = load_checkpoint(ckpt);
  const auto data = load_data(data_path);
  if (steps < 1) throw ConfigError("--steps must be >= 1");
  NmsConfig nms = state.cfg.nms;
  if (k > 0) nms.k = k;
  if (threshold >= 0.0) nms.threshold = threshold;
  if (nms.k > state.cfg.model.decoder.n_queries) {
    throw ConfigError("--k " + std::to_string(nms.k) + " exceeds N_q = " + std::to_string(state.cfg.model.decoder.n_queries));
  }
  const auto preds = predict_all(*state.model, data, state.norm, steps, nms, seed);
  for (const auto& p : preds) {
    for (const auto& t : p.preds.trajectories) {
      if (!t.waypoints.allFinite()) throw NumericError("nonfinite prediction for " + p.scene_id);
    }
  }
  write_predictions(out, preds);
  return kOk;
}

int cmd_eval(const std::string& pred_path, const std::string& data_path, const std::string& out, double miss) {
  require_file(pred_path);
  const auto preds = read_predictions(pred_path);
  const auto data = load_data(data_path);
  if (preds.empty()) throw DataError(pred_path + ": no predictions");
  MetricConfig mc;
  mc.miss_threshold = miss;
  const MetricReport r = evaluate(make_eval_items(preds, data, mc), mc);
  check_finite(r);
  std::string csv = "metric,bucket,value\n";
  auto row = [&](const std::string& m, const std::string& b, double v) { csv += m + "," + b + "," + format_double(v) + "\n"; };
  row("min_ade", "all", r.min_ade);
  row("min_fde", "all", r.min_fde);
  row("miss_rate", "all", r.miss_rate);
  row("map", "all", r.map);
  row("soft_map", "all", r.soft_map);
  row("count", "all", r.count);
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [b, ap] : r.per_bucket) {
    row("ap", to_string(b), ap.ap);
    row("soft_ap", to_string(b), ap.soft_ap);
    row("count", to_string(b), ap.count);
    buckets[to_string(b)] = {{"ap", ap.ap}, {"soft_ap", ap.soft_ap}, {"count", ap.count}};
  }
  write_text_atomic(out, csv);
  nlohmann::json summary{{"min_ade", r.min_ade}, {"min_fde", r.min_fde}, {"miss_rate", r.miss_rate},
                         {"map", r.map},         {"soft_map", r.soft_map}, {"count", r.count},
                         {"buckets", buckets}};
  std::cout << summary.dump() << "\n";
  return kOk;
}

int cmd_ablate(const std::string& data_path, const std::string& config, const std::string& out) {
  const auto data = load_data(data_path);
  const TrainConfig cfg = load_train_config(config, data);
  const AblationResult r = run_ablation(data, dataset_normalizer(data_path, data), cfg,
                                        [](const std::string& s) { std::cerr << s << "\n"; });
  for (const auto& row : r.per_seed) check_finite(row.report);
  write_text_atomic(out, ablation_csv(r.mean, false));
  write_text_atomic(out + ".seeds.csv", ablation_csv(r.per_seed, true));
  std::cout << ablation_csv(r.mean, false);
  return kOk;
}

int cmd_plot(const std::string& pred_path, const std::string& data_path, const std::string& scene_id,
             const std::string& out) {
  require_file(pred_path);
  const auto preds = read_predictions(pred_path);
  const auto data = load_data(data_path);
  const PredictionRecord* pred = nullptr;
  for (const auto& p : preds) {
    if (p.scene_id == scene_id) pred = &p;
  }
  const SceneRecord* scene = nullptr;
  for (const auto& r : data) {
    if (r.scene.id == scene_id) scene = &r;
  }
  if (pred == nullptr || scene == nullptr) throw DataError("scene '" + scene_id + "' not found in predictions and data");
  write_text_atomic(out, render_svg(scene->scene, pred->preds));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-matching multi-modal trajectory prediction"};
  app.require_subcommand(1, 1);

  std::uint64_t seed = 0;
  int count = 0;
  std::string out, config, data, ckpt, log, pred, scene_id, resume;
  int steps = 1;
  int k = 0;
  double threshold = -1.0;
  double miss = 2.0;
  bool quiet = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  gen->add_option("--seed", seed, "base seed")->required();
  gen->add_option("--count", count, "number of scenes")->required();
  gen->add_option("--out", out, "dataset path (JSON lines)")->required();
  gen->add_option("--config", config, "generator key = value file");

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", data, "dataset path")->required();
  tr->add_option("--config", config, "training key = value file");
  tr->add_option("--out-ckpt", ckpt, "checkpoint output")->required();
  tr->add_option("--log", log, "training log CSV")->required();
  tr->add_option("--resume", resume, "continue from a checkpoint");
  tr->add_flag("--quiet", quiet, "no progress output");

  auto* sa = app.add_subcommand("sample", "sample K trajectories per scene");
  sa->add_option("--ckpt", ckpt, "checkpoint")->required();
  sa->add_option("--data", data, "dataset path")->required();
  sa->add_option("--steps", steps, "ODE steps");
  sa->add_option("--k", k, "trajectories kept after NMS (default from the checkpoint config)");
  sa->add_option("--nms-threshold", threshold, "endpoint NMS threshold in scene units");
  sa->add_option("--seed", seed, "noise seed");
  sa->add_option("--out", out, "prediction dump")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a prediction dump");
  ev->add_option("--pred", pred, "prediction dump")->required();
  ev->add_option("--data", data, "dataset path")->required();
  ev->add_option("--out", out, "metric CSV")->required();
  ev->add_option("--miss-threshold", miss, "final displacement miss threshold");

  auto* ab = app.add_subcommand("ablate", "self-conditioning / ranking-loss ablation");
  ab->add_option("--data", data, "dataset path")->required();
  ab->add_option("--config", config, "training key = value file");
  ab->add_option("--out", out, "ablation CSV")->required();

  auto* pl = app.add_subcommand("plot", "render one scene as SVG");
  pl->add_option("--pred", pred, "prediction dump")->required();
  pl->add_option("--data", data, "dataset path")->required();
  pl->add_option("--scene-id", scene_id, "scene to draw")->required();
  pl->add_option("--out", out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (*gen) return cmd_gen(seed, count, out, config);
    if (*tr) return cmd_train(data, config, ckpt, log, resume, quiet);
    if (*sa) return cmd_sample(ckpt, data, steps, k, threshold, seed, out);
    if (*ev) return cmd_eval(pred, data, out, miss);
    if (*ab) return cmd_ablate(data, config, out);
    if (*pl) return cmd_plot(pred, data, scene_id, out);
  } catch (const IoError& e) {
    return fail(kMissingFile, "missing_file", e.what());
  } catch (const DataError& e) {
    return fail(kMalformed, "malformed_record", e.what());
  } catch (const DimensionError& e) {
    return fail(kMalformed, "malformed_record", e.what());
  } catch (const ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const NumericError& e) {
    return fail(kNumeric, "numeric", e.what());
  } catch (const DomainError& e) {
    return fail(kNumeric, "numeric", e.what());
  }
  return kUsage;
}
