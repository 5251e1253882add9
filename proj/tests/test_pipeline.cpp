#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "hydrofix/error.hpp"
#include "hydrofix/pipeline.hpp"
#include "hydrofix/raster.hpp"
#include "test_util.hpp"

using namespace hydrofix;
namespace fs = std::filesystem;

namespace {

Json small_config(const fs::path& out) {
  Json j = Json::parse(R"({
    "seed": 5,
    "synth": {
      "train": {"count": 2, "width": 256, "height": 256, "rivers": 2, "roads": 2, "decoys": 2},
      "val":   {"count": 1, "width": 256, "height": 256, "rivers": 2, "roads": 2},
      "test":  {"count": 1, "width": 256, "height": 256, "rivers": 2, "roads": 2, "decoys": 2}
    },
    "model": {"depth": 2, "base_channels": 2},
    "train": {"learning_rate": 0.001, "batch_size": 4, "epochs": 2},
    "horseshoe_samples": 200
  })");
  j["out_dir"] = out.string();
  return j;
}

std::string config_error(const Json& j) {
  try {
    parse_config(j, fs::current_path());
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = test::file_bytes(e.path());
  return out;
}

// A seed stored as a signed integer, as a config built in code holds it.
Json with_signed_seed(Json j, std::int64_t seed) {
  j["seed"] = seed;
  return j;
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(HYDROFIX_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config errors name the field") {
  const Json base = small_config("out");
  auto with = [&](const Json& patch) {
    Json j = base;
    j.merge_patch(patch);
    return config_error(j);
  };
  CHECK(config_error(base).empty());
  CHECK(with({{"bogus", 1}}).find("bogus") != std::string::npos);
  CHECK(with({{"train", {{"learning_rat", 0.1}}}}).find("train.learning_rat") != std::string::npos);
  CHECK(with({{"train", {{"epochs", "ten"}}}}).find("train.epochs") != std::string::npos);
  CHECK(with({{"synth", {{"test", {{"rivers", -1}}}}}}).find("synth.test") != std::string::npos);
  CHECK(with({{"synth", {{"val", {{"count", 0}}}}}}).find("synth.val.count") != std::string::npos);
  CHECK(with({{"train", {{"learning_rate", -1.0}}}}).find("train") != std::string::npos);
  CHECK(with({{"dataset", {{"tile_cells", 63}}}}).find("dataset.tile_cells") != std::string::npos);
  CHECK(with({{"filter", {{"threshold", 1.5}}}}).find("filter") != std::string::npos);
  CHECK(with({{"mosaic", {{"stride", 5}}}}).find("mosaic") != std::string::npos);
  CHECK(with({{"serve", {{"port", 70000}}}}).find("serve.port") != std::string::npos);
  CHECK(with({{"bootstrap", {{"lo", 0.5}, {"hi", 0.4}}}}).find("bootstrap") != std::string::npos);
  CHECK(!config_error(Json::array()).empty());
  CHECK(with({{"seed", -3}}).find("seed") != std::string::npos);
  CHECK(with({{"seed", 2.5}}).find("seed") != std::string::npos);
  CHECK(parse_config(with_signed_seed(base, 11), "/base").seed == 11);

  CliOverrides o;
  o.seed = 99;
  o.threshold = 0.3;
  o.out_dir = "elsewhere";
  const PipelineConfig cfg = parse_config(base, "/base", o);
  CHECK(cfg.seed == 99);
  CHECK(cfg.filter.threshold == 0.3);
  CHECK(cfg.out_dir == fs::absolute("elsewhere"));
  CHECK(config_hash(cfg.source) != config_hash(parse_config(base, "/base").source));
  CHECK(config_hash(base) == config_hash(Json::parse(base.dump())));
}

TEST_CASE("synth truth count equals the analytic crossing count") {
  for (auto [rivers, roads] : {std::pair{1, 1}, std::pair{2, 3}, std::pair{3, 3}}) {
    CAPTURE(rivers);
    CAPTURE(roads);
    test::TempDir dir;
    Json j = small_config(dir.path / "out");
    j["synth"] = {{"test", {{"count", 2}, {"width", 384}, {"height", 384}, {"rivers", rivers}, {"roads", roads}}}};
    const PipelineConfig cfg = parse_config(j, dir.path);
    REQUIRE(run_command("synth", cfg) == 0);
    const auto regions = load_split(cfg, "test");
    REQUIRE(regions.size() == 2);
    for (const auto& r : regions) {
      CHECK(r.truths.size() == static_cast<std::size_t>(rivers * roads));
      CHECK(r.rivers.size() == static_cast<std::size_t>(rivers));
      CHECK(r.roads.size() == static_cast<std::size_t>(roads));
      CHECK(r.dem.width() == 384);
    }
  }
}

TEST_CASE("full chain writes manifests and is deterministic") {
  test::TempDir dir;
  const auto run_all = [&](const fs::path& out) {
    const PipelineConfig cfg = parse_config(small_config(out), dir.path);
    for (const std::string cmd : {"synth", "features", "train", "predict", "extract", "eval", "bootstrap"}) {
      CAPTURE(cmd);
      REQUIRE(run_command(cmd, cfg) == 0);
      const Json m = read_json(out / "manifests" / (cmd + ".json"));
      CHECK(m["command"] == cmd);
      CHECK(m["seed"] == 5);
      CHECK(m["version"] == kVersion);
      CHECK(m["config_hash"].is_string());
      for (const auto& o : m["outputs"]) CHECK(fs::exists(out / o.get<std::string>()));
    }
    return cfg;
  };
  const PipelineConfig cfg = run_all(dir.path / "a");
  run_all(dir.path / "b");

  const auto a = tree_bytes(dir.path / "a"), b = tree_bytes(dir.path / "b");
  REQUIRE(a.size() == b.size());
  for (const auto& [rel, bytes] : a) {
    CAPTURE(rel);
    if (rel.rfind("manifests/", 0) == 0) continue;  // embed the out_dir path
    REQUIRE(b.count(rel));
    CHECK(b.at(rel) == bytes);
  }
  CHECK(a.count("model.hcm"));
  CHECK(a.count("eval.json"));
  CHECK(a.count("bootstrap.json"));
  CHECK(a.count("predict/test/r000/prob.hcr"));
  CHECK(a.count("extract/test/r000/candidates.jsonl"));

  const Json report = read_json(dir.path / "a" / "eval.json");
  CHECK(report.contains("max_recall"));
  CHECK(report.contains("mP"));
  CHECK(report.contains("curve"));

  // Probability maps sit on the network grid, inside (0, 1).
  const Grid prob = read_grid(dir.path / "a" / "predict/test/r000/prob.hcr");
  CHECK(prob.width() == 128);
  CHECK(prob.values.minCoeff() > 0.0f);
  CHECK(prob.values.maxCoeff() < 1.0f);

  SUBCASE("self-match scores perfectly") {
    const auto regions = load_split(cfg, "test");
    std::vector<Candidate> self;
    for (std::size_t i = 0; i < regions[0].truths.size(); ++i) {
      const Correction& t = regions[0].truths[i];
      Candidate c;
      c.id = "t" + std::to_string(i);
      const Point2 m = t.centroid();
      c.polygon = {m + Point2(-1, -1), m + Point2(1, -1), m + Point2(1, 1), m + Point2(-1, 1)};
      c.median_p = 0.9;
      self.push_back(c);
    }
    write_candidates(self, dir.path / "a/extract/test/r000/candidates.jsonl");
    fs::remove(dir.path / "a/extract/test/r000/verdicts.jsonl");
    REQUIRE(run_command("eval", cfg) == 0);
    const Json r = read_json(dir.path / "a" / "eval.json");
    CHECK(r["max_recall"] == 1.0);
    CHECK(r["mP"] == 1.0);
    CHECK(r["fp"] == 0);
    CHECK(r["fn"] == 0);
  }
}

TEST_CASE("cli exit codes") {
  test::TempDir dir;
  const fs::path cfg = dir.path / "cfg.json";
  write_json(small_config(dir.path / "out"), cfg);
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("synth --config " + cfg.string()) == 0);
  CHECK(fs::exists(dir.path / "out/regions/test/r000/dem.hcr"));
  CHECK(run_cli("synth --config " + cfg.string() + " --out " + (dir.path / "o2").string() + " --seed 6") == 0);
  CHECK(test::file_bytes(dir.path / "o2/regions/test/r000/dem.hcr") !=
        test::file_bytes(dir.path / "out/regions/test/r000/dem.hcr"));

  Json bad = small_config(dir.path / "out");
  bad["nonsense"] = true;
  write_json(bad, dir.path / "bad.json");
  CHECK(run_cli("synth --config " + (dir.path / "bad.json").string()) == 2);
  CHECK(run_cli("synth --config " + (dir.path / "missing.json").string()) != 0);
  CHECK(run_cli("frobnicate --config " + cfg.string()) != 0);
  CHECK(run_cli("extract --config " + cfg.string() + " --threshold 1.5") != 0);
  // Predict without a trained model fails at runtime.
  CHECK(run_cli("predict --config " + cfg.string()) == 1);
}

TEST_CASE("bootstrap set json round trip") {
  BootstrapSet b;
  b.negatives["train/r000"] = {Point2(1.5, 2.25), Point2(-3, 4)};
  b.truths["train/r000"] = {Correction::horseshoe("x", Point2(0, 0), Point2(4, 0), 2.5)};
  b.negatives["train/r001"] = {};
  const BootstrapSet c = bootstrap_set_from_json(bootstrap_set_to_json(b));
  CHECK(c.negatives.at("train/r000") == b.negatives.at("train/r000"));
  CHECK(c.truths.at("train/r000")[0].width == 2.5);
  CHECK(bootstrap_set_to_json(c) == bootstrap_set_to_json(b));
}
