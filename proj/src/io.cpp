#include "trajflow/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trajflow/errors.hpp"

namespace trajflow {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + ": expected an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DataError(std::string(what) + ": row " + std::to_string(r) + " must have " + std::to_string(cols) +
                      " numbers");
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!row[c].is_number()) throw DataError(std::string(what) + ": non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return m;
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

json agent_to_json(const AgentHistory& a) {
  return json{{"type", to_string(a.type)}, {"states", matrix_to_json(a.states)}};
}

AgentHistory agent_from_json(const json& j) {
  if (!j.is_object()) throw DataError("agent must be an object");
  AgentHistory a;
  a.type = agent_type_from_string(field(j, "type").get<std::string>());
  a.states = matrix_from_json(field(j, "states"), kAgentStateDim, "agent states");
  return a;
}

FutureTrajectory traj_from_json(const json& j, const char* what) {
  FutureTrajectory t;
  t.waypoints = matrix_from_json(j, 2, what);
  if (!t.waypoints.allFinite()) throw DataError(std::string(what) + ": nonfinite waypoint");
  return t;
}

}  // namespace

SceneRecord to_record(const GeneratedScene& g) {
  SceneRecord r;
  r.scene = g.scene;
  r.branch = g.branch;
  r.mode_futures = g.mode_futures;
  return r;
}

json scene_to_json(const SceneRecord& r) {
  const Scene& s = r.scene;
  json j;
  j["scene_id"] = s.id;
  j["ego"] = agent_to_json(s.context.ego);
  json neighbors = json::array();
  for (const auto& n : s.context.neighbors) neighbors.push_back(agent_to_json(n));
  j["neighbors"] = std::move(neighbors);
  json map = json::array();
  for (const auto& pl : s.context.map) {
    std::vector<int> valid(pl.valid.begin(), pl.valid.end());
    map.push_back(json{{"type", to_string(pl.type)}, {"points", matrix_to_json(pl.points)}, {"valid", valid}});
  }
  j["map"] = std::move(map);
  j["future"] = matrix_to_json(s.future.waypoints);
  if (r.branch >= 0) j["branch"] = r.branch;
  if (!r.mode_futures.empty()) {
    json modes = json::array();
    for (const auto& m : r.mode_futures) modes.push_back(matrix_to_json(m.waypoints));
    j["mode_futures"] = std::move(modes);
  }
  return j;
}

SceneRecord scene_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record must be an object");
  SceneRecord r;
  try {
    r.scene.id = field(j, "scene_id").get<std::string>();
    r.scene.context.ego = agent_from_json(field(j, "ego"));
    const json& neighbors = field(j, "neighbors");
    if (!neighbors.is_array()) throw DataError("neighbors must be an array");
    for (const auto& n : neighbors) r.scene.context.neighbors.push_back(agent_from_json(n));
    const json& map = field(j, "map");
    if (!map.is_array()) throw DataError("map must be an array");
    for (const auto& m : map) {
      Polyline pl;
      pl.type = polyline_type_from_string(field(m, "type").get<std::string>());
      pl.points = matrix_from_json(field(m, "points"), kMapPointDim, "polyline points");
      for (const auto& v : field(m, "valid")) pl.valid.push_back(v.get<int>() != 0 ? 1 : 0);
      r.scene.context.map.push_back(std::move(pl));
    }
    r.scene.future = traj_from_json(field(j, "future"), "future");
    if (j.contains("branch")) r.branch = j["branch"].get<int>();
    if (j.contains("mode_futures")) {
      for (const auto& m : j["mode_futures"]) r.mode_futures.push_back(traj_from_json(m, "mode_futures"));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  validate(r.scene.context);
  return r;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::vector<SceneRecord> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  std::vector<SceneRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(scene_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::string& path, const std::vector<SceneRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += scene_to_json(r).dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::string meta_path(const std::string& dataset_path) { return dataset_path + ".meta.json"; }

json generator_to_json(const SceneGenConfig& c) {
  return json{{"fork_count", c.fork_count},
              {"branch_probs", c.branch_probs},
              {"agent_count", c.agent_count},
              {"history_steps", c.history_steps},
              {"future_steps", c.future_steps},
              {"points_per_polyline", c.points_per_polyline},
              {"max_polylines", c.max_polylines},
              {"point_spacing", c.point_spacing},
              {"speed_min", c.speed_min},
              {"speed_max", c.speed_max},
              {"fork_distance_min", c.fork_distance_min},
              {"fork_distance_max", c.fork_distance_max},
              {"turn_radius", c.turn_radius},
              {"turn_angle_deg", c.turn_angle_deg},
              {"lane_width", c.lane_width},
              {"position_noise", c.position_noise},
              {"history_dropout", c.history_dropout},
              {"random_pose", c.random_pose}};
}

SceneGenConfig generator_from_json(const json& j) {
  SceneGenConfig c;
  try {
    c.fork_count = j.at("fork_count").get<int>();
    c.branch_probs = j.at("branch_probs").get<std::vector<double>>();
    c.agent_count = j.at("agent_count").get<int>();
    c.history_steps = j.at("history_steps").get<int>();
    c.future_steps = j.at("future_steps").get<int>();
    c.points_per_polyline = j.at("points_per_polyline").get<int>();
    c.max_polylines = j.at("max_polylines").get<int>();
    c.point_spacing = j.at("point_spacing").get<double>();
    c.speed_min = j.at("speed_min").get<double>();
    c.speed_max = j.at("speed_max").get<double>();
    c.fork_distance_min = j.at("fork_distance_min").get<double>();
    c.fork_distance_max = j.at("fork_distance_max").get<double>();
    c.turn_radius = j.at("turn_radius").get<double>();
    c.turn_angle_deg = j.at("turn_angle_deg").get<double>();
    c.lane_width = j.at("lane_width").get<double>();
    c.position_noise = j.at("position_noise").get<double>();
    c.history_dropout = j.at("history_dropout").get<double>();
    c.random_pose = j.at("random_pose").get<bool>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed generator config: ") + e.what());
  }
  return c;
}

void write_meta(const std::string& path, const DatasetMeta& meta) {
  json j;
  j["normalizer"] = {{"offset", {meta.normalizer.offset.x(), meta.normalizer.offset.y()}},
                     {"scale", {meta.normalizer.scale.x(), meta.normalizer.scale.y()}}};
  j["coverage"] = meta.coverage;
  j["seed"] = meta.seed;
  j["count"] = meta.count;
  j["generator"] = generator_to_json(meta.generator);
  write_text_atomic(path, j.dump(2) + "\n");
}

DatasetMeta read_meta(const std::string& path) {
  const std::string text = read_text(path);
  DatasetMeta m;
  try {
    const json j = json::parse(text);
    const auto off = j.at("normalizer").at("offset").get<std::vector<double>>();
    const auto sc = j.at("normalizer").at("scale").get<std::vector<double>>();
    if (off.size() != 2 || sc.size() != 2) throw DataError("normalizer must have 2 coordinates");
    m.normalizer.offset = Eigen::Vector2d(off[0], off[1]);
    m.normalizer.scale = Eigen::Vector2d(sc[0], sc[1]);
    m.coverage = j.at("coverage").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.count = j.at("count").get<int>();
    m.generator = generator_from_json(j.at("generator"));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return m;
}

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    json trajs = json::array();
    for (const auto& t : r.preds.trajectories) trajs.push_back(matrix_to_json(t.waypoints));
    json j{{"scene_id", r.scene_id},
           {"trajectories", std::move(trajs)},
           {"confidences", r.preds.confidences},
           {"source_indices", r.preds.source_indices}};
    text += j.dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PredictionRecord r;
      r.scene_id = j.at("scene_id").get<std::string>();
      for (const auto& t : j.at("trajectories")) r.preds.trajectories.push_back(traj_from_json(t, "trajectory"));
      r.preds.confidences = j.at("confidences").get<std::vector<double>>();
      r.preds.source_indices = j.at("source_indices").get<std::vector<int>>();
      const std::size_t k = r.preds.trajectories.size();
      if (k == 0 || r.preds.confidences.size() != k || r.preds.source_indices.size() != k) {
        throw DataError("trajectories, confidences and source_indices must have equal nonzero length");
      }
      r.preds.padded.assign(k, 0);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace trajflow
