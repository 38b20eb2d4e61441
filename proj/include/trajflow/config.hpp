#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "trajflow/scene.hpp"

namespace trajflow {

/// Flat `key = value` text, one pair per line; `#` starts a comment.
using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError on malformed lines and duplicate keys.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

/// Typed reader that remembers which keys were consumed so unknown keys can
/// be rejected.
class KeyReader {
 public:
  explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

  void get(const std::string& key, int& out);
  void get(const std::string& key, double& out);
  void get(const std::string& key, bool& out);
  void get(const std::string& key, std::string& out);
  void get(const std::string& key, std::uint64_t& out);
  void get(const std::string& key, std::vector<int>& out);
  void get(const std::string& key, std::vector<double>& out);

  /// Throws ConfigError naming the first key never read.
  void finish() const;

 private:
  const std::string* find(const std::string& key);

  const KeyValues& kv_;
  std::set<std::string> used_;
};

std::string format_double(double v);
std::string join(const std::vector<int>& v);
std::string join(const std::vector<double>& v);

SceneGenConfig generator_config_from_kv(const KeyValues& kv);
KeyValues generator_config_to_kv(const SceneGenConfig& c);

}  // namespace trajflow
