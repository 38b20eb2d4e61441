#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "trajflow/config.hpp"
#include "trajflow/errors.hpp"
#include "trajflow/io.hpp"
#include "trajflow/trainer.hpp"

using namespace trajflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("trajflow_io_" + std::to_string(std::rand()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

bool same_scene(const Scene& a, const Scene& b) {
  if (a.id != b.id || a.future.waypoints != b.future.waypoints) return false;
  if (a.context.ego.states != b.context.ego.states || a.context.ego.type != b.context.ego.type) return false;
  if (a.context.neighbors.size() != b.context.neighbors.size() || a.context.map.size() != b.context.map.size()) return false;
  for (std::size_t i = 0; i < a.context.neighbors.size(); ++i) {
    if (a.context.neighbors[i].states != b.context.neighbors[i].states) return false;
  }
  for (std::size_t i = 0; i < a.context.map.size(); ++i) {
    const auto &p = a.context.map[i], &q = b.context.map[i];
    if (p.points != q.points || p.valid != q.valid || p.type != q.type) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("dataset round trip is exact") {
  TempDir dir;
  const auto records = testing::generated_records(5, SceneGenConfig{}, 40);
  write_dataset(dir.file("d.jsonl"), records);
  const auto back = read_dataset(dir.file("d.jsonl"));
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(same_scene(back[i].scene, records[i].scene));
    CHECK(back[i].branch == records[i].branch);
    REQUIRE(back[i].mode_futures.size() == records[i].mode_futures.size());
    for (std::size_t m = 0; m < records[i].mode_futures.size(); ++m) {
      CHECK(back[i].mode_futures[m].waypoints == records[i].mode_futures[m].waypoints);
    }
  }
}

TEST_CASE("dataset read errors") {
  TempDir dir;
  CHECK_THROWS_AS(read_dataset(dir.file("missing.jsonl")), IoError);

  write_file(dir.file("garbage.jsonl"), "{not json\n");
  CHECK_THROWS_AS(read_dataset(dir.file("garbage.jsonl")), DataError);

  const auto records = testing::generated_records(2, SceneGenConfig{}, 1);
  nlohmann::json j = scene_to_json(records[0]);
  j.erase("future");
  write_file(dir.file("nofuture.jsonl"), scene_to_json(records[1]).dump() + "\n" + j.dump() + "\n");
  try {
    read_dataset(dir.file("nofuture.jsonl"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  nlohmann::json bad = scene_to_json(records[0]);
  bad["ego"]["states"][0][0] = "x";
  CHECK_THROWS_AS(scene_from_json(bad), DataError);
}

TEST_CASE("metadata and predictions round trip") {
  TempDir dir;
  DatasetMeta meta;
  meta.normalizer.offset = Eigen::Vector2d(1.25, -0.1);
  meta.normalizer.scale = Eigen::Vector2d(3.0 / 7.0, 11.0);
  meta.seed = 99;
  meta.count = 12;
  meta.generator.fork_count = 3;
  meta.generator.branch_probs = {0.2, 0.3, 0.5};
  write_meta(dir.file("m.json"), meta);
  const DatasetMeta m = read_meta(dir.file("m.json"));
  CHECK(m.normalizer.offset == meta.normalizer.offset);
  CHECK(m.normalizer.scale == meta.normalizer.scale);
  CHECK(m.seed == 99);
  CHECK(m.count == 12);
  CHECK(m.generator.fork_count == 3);
  CHECK(m.generator.branch_probs == meta.generator.branch_probs);
  CHECK(meta_path("a/b.jsonl") == "a/b.jsonl.meta.json");

  PredictionRecord p;
  p.scene_id = "s1";
  Rng rng(1);
  for (int k = 0; k < 3; ++k) {
    FutureTrajectory t;
    t.waypoints = Eigen::MatrixXd::NullaryExpr(4, 2, [&]() { return rng.normal(); });
    p.preds.trajectories.push_back(t);
    p.preds.confidences.push_back(rng.uniform());
    p.preds.source_indices.push_back(5 - k);
    p.preds.padded.push_back(0);
  }
  write_predictions(dir.file("p.jsonl"), {p, p});
  const auto back = read_predictions(dir.file("p.jsonl"));
  REQUIRE(back.size() == 2);
  CHECK(back[1].scene_id == "s1");
  CHECK(back[1].preds.confidences == p.preds.confidences);
  CHECK(back[1].preds.source_indices == p.preds.source_indices);
  for (int k = 0; k < 3; ++k) CHECK(back[1].preds.trajectories[k].waypoints == p.preds.trajectories[k].waypoints);
}

TEST_CASE("atomic text writes") {
  TempDir dir;
  write_text_atomic(dir.file("t.txt"), "one");
  write_text_atomic(dir.file("t.txt"), "two");
  CHECK(read_text(dir.file("t.txt")) == "two");
  CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator{}) == 1);
  CHECK_THROWS_AS(read_text(dir.file("none.txt")), IoError);
}

TEST_CASE("key-value parsing") {
  const KeyValues kv = parse_key_values("# comment\n a = 1 \n\nb=x y # trailing\nc = 1, 2,3\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "x y");
  KeyReader r(kv);
  int a = 0;
  std::string b;
  std::vector<int> c;
  r.get("a", a);
  r.get("b", b);
  r.get("c", c);
  r.finish();
  CHECK(a == 1);
  CHECK(c == std::vector<int>{1, 2, 3});
  CHECK(parse_key_values(format_key_values(kv)) == kv);

  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values(" = 3\n"), ConfigError);

  KeyReader partial(kv);
  partial.get("a", a);
  CHECK_THROWS_AS(partial.finish(), ConfigError);

  KeyReader wrong(parse_key_values("a = 1.5\nb = maybe\n"));
  CHECK_THROWS_AS(wrong.get("a", a), ConfigError);
  bool flag = false;
  CHECK_THROWS_AS(wrong.get("b", flag), ConfigError);
}

TEST_CASE("training configuration") {
  const TrainConfig def;
  const TrainConfig back = TrainConfig::from_key_values(def.to_key_values());
  CHECK(back.to_key_values() == def.to_key_values());
  CHECK(back.hash() == def.hash());

  TrainConfig other = def;
  other.peak_lr = 2e-3;
  CHECK(other.hash() != def.hash());

  KeyValues kv = def.to_key_values();
  kv["epoch"] = "3";
  CHECK_THROWS_AS(TrainConfig::from_key_values(kv), ConfigError);

  kv = def.to_key_values();
  kv["sc_probability"] = "1.5";
  CHECK_THROWS_AS(TrainConfig::from_key_values(kv), ConfigError);
  kv = def.to_key_values();
  kv["nms_k"] = "9";
  CHECK_THROWS_AS(TrainConfig::from_key_values(kv), ConfigError);
  kv = def.to_key_values();
  kv["regression_mode"] = "huber";
  CHECK_THROWS_AS(TrainConfig::from_key_values(kv), ConfigError);

  // Only the keys present are overridden.
  const TrainConfig partial = TrainConfig::from_key_values(parse_key_values("epochs = 3\nrank_loss = false\n"));
  CHECK(partial.epochs == 3);
  CHECK_FALSE(partial.rank_loss);
  CHECK(partial.loss_config().rank_weight == 0.0);
  CHECK(partial.batch_size == def.batch_size);

  const TrainConfig paper = TrainConfig::paper_defaults();
  CHECK(paper.epochs == 40);
  CHECK(paper.batch_size == 80);
  CHECK(paper.peak_lr == 1e-4);
  CHECK(paper.weight_decay == 0.01);
  CHECK(paper.lambda_rank == 0.1);
  CHECK(paper.sc_probability == 0.5);
}

TEST_CASE("generator configuration keys") {
  SceneGenConfig g;
  g.fork_count = 3;
  g.turn_angle_deg = 45.0;
  g.branch_probs = {0.5, 0.25, 0.25};
  const SceneGenConfig back = generator_config_from_kv(generator_config_to_kv(g));
  CHECK(back.fork_count == 3);
  CHECK(back.turn_angle_deg == 45.0);
  CHECK(back.branch_probs == g.branch_probs);
  CHECK_THROWS_AS(generator_config_from_kv(parse_key_values("forks = 2\n")), ConfigError);
}
