#include "trajflow/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "trajflow/errors.hpp"

namespace trajflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config: duplicate key '" + key + "'");
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

const std::string* KeyReader::find(const std::string& key) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyReader::get(const std::string& key, int& out) {
  if (const auto* v = find(key)) out = parse_number<int>(key, *v);
}

void KeyReader::get(const std::string& key, double& out) {
  if (const auto* v = find(key)) out = parse_number<double>(key, *v);
}

void KeyReader::get(const std::string& key, std::uint64_t& out) {
  if (const auto* v = find(key)) out = parse_number<std::uint64_t>(key, *v);
}

void KeyReader::get(const std::string& key, bool& out) {
  const auto* v = find(key);
  if (v == nullptr) return;
  if (*v == "true" || *v == "1") {
    out = true;
  } else if (*v == "false" || *v == "0") {
    out = false;
  } else {
    throw ConfigError("key '" + key + "': expected true or false");
  }
}

void KeyReader::get(const std::string& key, std::string& out) {
  if (const auto* v = find(key)) out = *v;
}

void KeyReader::get(const std::string& key, std::vector<int>& out) {
  const auto* v = find(key);
  if (v == nullptr) return;
  out.clear();
  for (const auto& item : split_list(*v)) out.push_back(parse_number<int>(key, item));
}

void KeyReader::get(const std::string& key, std::vector<double>& out) {
  const auto* v = find(key);
  if (v == nullptr) return;
  out.clear();
  for (const auto& item : split_list(*v)) out.push_back(parse_number<double>(key, item));
}

void KeyReader::finish() const {
  for (const auto& [k, v] : kv_) {
    if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

SceneGenConfig generator_config_from_kv(const KeyValues& kv) {
  SceneGenConfig c;
  KeyReader r(kv);
  r.get("fork_count", c.fork_count);
  r.get("branch_probs", c.branch_probs);
  r.get("agent_count", c.agent_count);
  r.get("history_steps", c.history_steps);
  r.get("future_steps", c.future_steps);
  r.get("points_per_polyline", c.points_per_polyline);
  r.get("max_polylines", c.max_polylines);
  r.get("point_spacing", c.point_spacing);
  r.get("speed_min", c.speed_min);
  r.get("speed_max", c.speed_max);
  r.get("fork_distance_min", c.fork_distance_min);
  r.get("fork_distance_max", c.fork_distance_max);
  r.get("turn_radius", c.turn_radius);
  r.get("turn_angle_deg", c.turn_angle_deg);
  r.get("lane_width", c.lane_width);
  r.get("position_noise", c.position_noise);
  r.get("history_dropout", c.history_dropout);
  r.get("random_pose", c.random_pose);
  r.finish();
  c.validate();
  return c;
}

KeyValues generator_config_to_kv(const SceneGenConfig& c) {
  return {{"fork_count", std::to_string(c.fork_count)},
          {"branch_probs", join(c.branch_probs)},
          {"agent_count", std::to_string(c.agent_count)},
          {"history_steps", std::to_string(c.history_steps)},
          {"future_steps", std::to_string(c.future_steps)},
          {"points_per_polyline", std::to_string(c.points_per_polyline)},
          {"max_polylines", std::to_string(c.max_polylines)},
          {"point_spacing", format_double(c.point_spacing)},
          {"speed_min", format_double(c.speed_min)},
          {"speed_max", format_double(c.speed_max)},
          {"fork_distance_min", format_double(c.fork_distance_min)},
          {"fork_distance_max", format_double(c.fork_distance_max)},
          {"turn_radius", format_double(c.turn_radius)},
          {"turn_angle_deg", format_double(c.turn_angle_deg)},
          {"lane_width", format_double(c.lane_width)},
          {"position_noise", format_double(c.position_noise)},
          {"history_dropout", format_double(c.history_dropout)},
          {"random_pose", c.random_pose ? "true" : "false"}};
}

}  // namespace trajflow
