#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajflow/normalizer.hpp"
#include "trajflow/scene.hpp"
#include "trajflow/selection.hpp"

namespace trajflow {

/// One dataset line. `branch` and `mode_futures` are present for generated
/// scenes (-1 / empty otherwise).
struct SceneRecord {
  Scene scene;
  int branch = -1;
  std::vector<FutureTrajectory> mode_futures;
};

SceneRecord to_record(const GeneratedScene& g);

nlohmann::json scene_to_json(const SceneRecord& r);
/// Throws DataError on any structural problem.
SceneRecord scene_from_json(const nlohmann::json& j);

/// Throws IoError if the file cannot be opened, DataError (with line number)
/// on a malformed record.
std::vector<SceneRecord> read_dataset(const std::string& path);
void write_dataset(const std::string& path, const std::vector<SceneRecord>& records);

struct DatasetMeta {
  Normalizer normalizer;
  double coverage = 0.999;
  std::uint64_t seed = 0;
  int count = 0;
  SceneGenConfig generator;
};

std::string meta_path(const std::string& dataset_path);
void write_meta(const std::string& path, const DatasetMeta& meta);
DatasetMeta read_meta(const std::string& path);

nlohmann::json generator_to_json(const SceneGenConfig& c);
SceneGenConfig generator_from_json(const nlohmann::json& j);

/// A prediction dump line, in scene units.
struct PredictionRecord {
  std::string scene_id;
  PredictionSet preds;
};

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

std::string read_text(const std::string& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace trajflow
