#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hydrofix/evaluate.hpp"
#include "hydrofix/hydro.hpp"
#include "hydrofix/json_io.hpp"
#include "hydrofix/labels.hpp"
#include "hydrofix/mosaic.hpp"
#include "hydrofix/polygonize.hpp"
#include "hydrofix/segnet/train.hpp"
#include "hydrofix/synth.hpp"

namespace hydrofix {

inline constexpr const char* kVersion = "0.1.0";

struct SynthSplit {
  std::string split;
  int count = 1;
  SynthParams params;
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path static_dir;
  std::string region;  ///< "<split>/<name>"; empty selects the first test region
};

struct PipelineConfig {
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 1;
  std::vector<SynthSplit> synth;
  std::map<std::string, std::vector<std::filesystem::path>> regions;  ///< explicit region dirs per split
  std::string train_split = "train";
  std::string val_split = "val";
  std::string test_split = "test";
  std::string bootstrap_split = "train";
  FeatureOptions features;
  DatasetOptions dataset;
  segnet::ModelArch model;
  segnet::TrainConfig train;
  std::filesystem::path train_bootstrap;  ///< bootstrap.json to fold into the training set
  std::filesystem::path init_model;       ///< warm start
  MosaicConfig mosaic;
  FilterConfig filter;
  int horseshoe_samples = 2000;
  double match_radius = kDefaultMatchRadius;
  double eval_threshold = 0.5;
  BootstrapRange bootstrap;
  ServeConfig serve;

  Json source;  ///< effective configuration after overrides, used for hashing
};

struct CliOverrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;  ///< contour level T
};

/// Parses and validates a configuration. Relative paths resolve against
/// base_dir. Errors are ConfigError naming the offending field path.
PipelineConfig parse_config(const Json& j, const std::filesystem::path& base_dir, const CliOverrides& overrides = {});
PipelineConfig load_config(const std::filesystem::path& path, const CliOverrides& overrides = {});

/// 64-bit FNV-1a of the canonical JSON dump.
std::uint64_t config_hash(const Json& j);

// ---------------------------------------------------------------------------
// Regions on disk: dem.hcr, truths.jsonl, rivers.json, roads.json

struct Region {
  std::string name;  ///< "<split>/<dir name>"
  std::filesystem::path dir;
  Grid dem;
  std::vector<Correction> truths;
  std::vector<Polyline> rivers;
  std::vector<Polyline> roads;
};

void write_region(const SynthResult& synth, const std::filesystem::path& dir);
Region load_region(const std::filesystem::path& dir, const std::string& name);
std::vector<Region> load_split(const PipelineConfig& cfg, const std::string& split);

/// Full-resolution features for a region.
FeatureStack region_features(const Region& region, const FeatureOptions& options);
/// The same, 2x downsampled to the network resolution.
FeatureStack network_features(const Region& region, const FeatureOptions& options);

/// Extra negatives and truths per region name, as written by the bootstrap stage.
struct BootstrapSet {
  std::map<std::string, std::vector<Point2>> negatives;
  std::map<std::string, std::vector<Correction>> truths;
};
Json bootstrap_set_to_json(const BootstrapSet& b);
BootstrapSet bootstrap_set_from_json(const Json& j);

/// Correction-centered tiles (plus bootstrap extras) for every region.
std::vector<DatasetTile> build_split_dataset(const std::vector<Region>& regions, const PipelineConfig& cfg,
                                             const BootstrapSet* extras = nullptr);

/// Region probability map at the network resolution.
Grid predict_probability(const segnet::ParamMap<float>& params, const segnet::ModelArch& arch, const Region& region,
                         const PipelineConfig& cfg);

/// Candidates of a probability map; the DEM is brought to the map's grid.
std::vector<Candidate> extract_region(const Grid& prob, const Region& region, const PipelineConfig& cfg);

/// Candidates that were not filtered out.
std::vector<Candidate> proposals_of(const std::vector<Candidate>& candidates);

/// Tile AUC of a model on a tile set.
double model_tile_auc(const segnet::ParamMap<float>& params, const segnet::ModelArch& arch,
                      const std::vector<DatasetTile>& tiles, bool histogram = false);

/// Runs one CLI subcommand. Returns the process exit status.
int run_command(const std::string& command, const PipelineConfig& cfg);

}  // namespace hydrofix
