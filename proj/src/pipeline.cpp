#include "hydrofix/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <set>

#include "hydrofix/error.hpp"
#include "hydrofix/review.hpp"
#include "hydrofix/segnet/checkpoint.hpp"

namespace hydrofix {

namespace fs = std::filesystem;

namespace {

/// Walks one JSON object, remembering which keys were consumed so unknown
/// keys can be reported with their full path.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  Fields sub(const std::string& key) {
    seen_.insert(key);
    return Fields(j_.at(key), at(key));
  }
  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void read(const std::string& key, double& out) {
    if (!take(key)) return;
    if (!j_[key].is_number()) throw ConfigError(at(key) + ": expected a number");
    out = j_[key].get<double>();
  }
  void read(const std::string& key, float& out) {
    double d = out;
    read(key, d);
    out = static_cast<float>(d);
  }
  void read(const std::string& key, int& out) {
    if (!take(key)) return;
    if (!j_[key].is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
    out = j_[key].get<int>();
  }
  void read(const std::string& key, Eigen::Index& out) {
    int v = static_cast<int>(out);
    read(key, v);
    out = v;
  }
  void read(const std::string& key, std::uint64_t& out) {
    if (!take(key)) return;
    const Json& v = j_[key];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(at(key) + ": expected a non-negative integer");
    out = j_[key].get<std::uint64_t>();
  }
  void read(const std::string& key, bool& out) {
    if (!take(key)) return;
    if (!j_[key].is_boolean()) throw ConfigError(at(key) + ": expected true or false");
    out = j_[key].get<bool>();
  }
  void read(const std::string& key, std::string& out) {
    if (!take(key)) return;
    if (!j_[key].is_string()) throw ConfigError(at(key) + ": expected a string");
    out = j_[key].get<std::string>();
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()) + ": unknown field");
  }

  std::string where() const { return path_.empty() ? "<root>" : path_; }

 private:
  bool take(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void check(const std::string& path, Fn&& validate) {
  try {
    validate();
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing_path(const fs::path& base, const std::string& p, const std::string& field) {
  const fs::path path = resolve(base, p);
  if (!fs::exists(path)) throw ConfigError(field + ": path does not exist: " + path.string());
  return path;
}

void read_synth_params(Fields& f, SynthParams& p) {
  f.read("width", p.width);
  f.read("height", p.height);
  f.read("cell_size", p.cell_size);
  f.read("rivers", p.rivers);
  f.read("roads", p.roads);
  f.read("embankment_height", p.embankment_height);
  f.read("valley_depth", p.valley_depth);
  f.read("culvert_probability", p.culvert_probability);
  f.read("noise_amplitude", p.noise_amplitude);
  f.read("bumps", p.bumps);
  f.read("bump_amplitude", p.bump_amplitude);
  f.read("channel_half_width", p.channel_half_width);
  f.read("valley_half_width", p.valley_half_width);
  f.read("road_half_width", p.road_half_width);
  f.read("shoulder_width", p.shoulder_width);
  f.read("max_angle_deg", p.max_angle_deg);
  f.read("meander_amplitude", p.meander_amplitude);
  f.read("edge_margin", p.edge_margin);
  f.read("crossing_spacing", p.crossing_spacing);
  f.read("feature_spacing", p.feature_spacing);
  f.read("decoys", p.decoys);
  f.read("decoy_half_length", p.decoy_half_length);
  f.read("decoy_min_strength", p.decoy_min_strength);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace

std::uint64_t config_hash(const Json& j) { return fnv1a(j.dump()); }

PipelineConfig parse_config(const Json& input, const fs::path& base_dir, const CliOverrides& overrides) {
  Json j = input;
  if (!j.is_object()) throw ConfigError("<root>: expected an object");
  if (overrides.out_dir) j["out_dir"] = fs::absolute(*overrides.out_dir).string();  // CLI paths are relative to the cwd
  if (overrides.seed) j["seed"] = *overrides.seed;
  if (overrides.threshold) j["filter"]["threshold"] = *overrides.threshold;

  PipelineConfig cfg;
  cfg.source = j;
  Fields root(j, "");
  std::string out_dir = "out";
  root.read("out_dir", out_dir);
  cfg.out_dir = resolve(base_dir, out_dir);
  root.read("seed", cfg.seed);
  cfg.train.seed = cfg.seed;

  if (root.has("synth")) {
    Fields synth = root.sub("synth");
    for (const auto& [split, body] : j["synth"].items()) {
      Fields s = synth.sub(split);
      SynthSplit ss;
      ss.split = split;
      s.read("count", ss.count);
      if (ss.count < 1) throw ConfigError(s.at("count") + ": must be >= 1");
      read_synth_params(s, ss.params);
      s.done();
      check(synth.at(split), [&] { ss.params.validate(); });
      cfg.synth.push_back(ss);
    }
    synth.done();
  }

  if (root.has("regions")) {
    Fields regions = root.sub("regions");
    for (const auto& [split, list] : j["regions"].items()) {
      const Json& arr = regions.raw(split);
      if (!arr.is_array()) throw ConfigError(regions.at(split) + ": expected a list of region directories");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string field = regions.at(split) + "[" + std::to_string(i) + "]";
        if (!arr[i].is_string()) throw ConfigError(field + ": expected a string");
        cfg.regions[split].push_back(existing_path(base_dir, arr[i].get<std::string>(), field));
      }
    }
    regions.done();
  }

  if (root.has("splits")) {
    Fields s = root.sub("splits");
    s.read("train", cfg.train_split);
    s.read("val", cfg.val_split);
    s.read("test", cfg.test_split);
    s.read("bootstrap", cfg.bootstrap_split);
    s.done();
  }

  if (root.has("features")) {
    Fields f = root.sub("features");
    f.read("flow", cfg.features.flow);
    f.read("fill", cfg.features.fill);
    f.read("vectors", cfg.features.vectors);
    f.read("vector_half_width", cfg.features.vector_half_width);
    f.done();
    if (!(cfg.features.vector_half_width > 0)) throw ConfigError(f.at("vector_half_width") + ": must be positive");
  }

  if (root.has("dataset")) {
    Fields f = root.sub("dataset");
    f.read("tile_cells", cfg.dataset.tile_cells);
    f.read("line_half_width", cfg.dataset.line_half_width);
    f.done();
    if (cfg.dataset.tile_cells < 2 || cfg.dataset.tile_cells % 2 != 0)
      throw ConfigError(f.at("tile_cells") + ": must be a positive even number");
    if (!(cfg.dataset.line_half_width > 0)) throw ConfigError(f.at("line_half_width") + ": must be positive");
  }

  if (root.has("model")) {
    Fields f = root.sub("model");
    f.read("depth", cfg.model.depth);
    f.read("base_channels", cfg.model.base_channels);
    f.done();
  }

  if (root.has("train")) {
    Fields f = root.sub("train");
    f.read("learning_rate", cfg.train.learning_rate);
    f.read("batch_size", cfg.train.batch_size);
    f.read("epochs", cfg.train.epochs);
    f.read("gamma", cfg.train.gamma);
    f.read("beta1", cfg.train.beta1);
    f.read("beta2", cfg.train.beta2);
    f.read("epsilon", cfg.train.epsilon);
    f.read("crop_cells", cfg.train.crop_cells);
    std::string boot, init;
    f.read("bootstrap", boot);
    f.read("init_model", init);
    if (!boot.empty()) cfg.train_bootstrap = existing_path(base_dir, boot, f.at("bootstrap"));
    if (!init.empty()) cfg.init_model = existing_path(base_dir, init, f.at("init_model"));
    f.done();
    check("train", [&] { cfg.train.validate(); });
  }

  if (root.has("mosaic")) {
    Fields f = root.sub("mosaic");
    f.read("stride", cfg.mosaic.stride);
    f.done();
  }

  if (root.has("filter")) {
    Fields f = root.sub("filter");
    f.read("min_area_m2", cfg.filter.min_area_m2);
    f.read("max_area_m2", cfg.filter.max_area_m2);
    f.read("min_elev_var", cfg.filter.min_elev_var);
    f.read("min_median_p", cfg.filter.min_median_p);
    f.read("threshold", cfg.filter.threshold);
    f.read("threshold_lo", cfg.filter.threshold_lo);
    f.done();
  }
  check("filter", [&] { cfg.filter.validate(); });

  root.read("horseshoe_samples", cfg.horseshoe_samples);
  if (cfg.horseshoe_samples < 10) throw ConfigError("horseshoe_samples: must be >= 10");

  if (root.has("eval")) {
    Fields f = root.sub("eval");
    f.read("match_radius", cfg.match_radius);
    f.read("threshold", cfg.eval_threshold);
    f.done();
    if (!(cfg.match_radius > 0)) throw ConfigError(f.at("match_radius") + ": must be positive");
  }

  if (root.has("bootstrap")) {
    Fields f = root.sub("bootstrap");
    f.read("lo", cfg.bootstrap.lo);
    f.read("hi", cfg.bootstrap.hi);
    f.done();
    if (!(cfg.bootstrap.lo <= cfg.bootstrap.hi)) throw ConfigError("bootstrap: lo must not exceed hi");
  }

  if (root.has("serve")) {
    Fields f = root.sub("serve");
    f.read("host", cfg.serve.host);
    f.read("port", cfg.serve.port);
    std::string dir;
    f.read("static_dir", dir);
    if (!dir.empty()) cfg.serve.static_dir = existing_path(base_dir, dir, f.at("static_dir"));
    f.read("region", cfg.serve.region);
    f.done();
    if (cfg.serve.port < 0 || cfg.serve.port > 65535) throw ConfigError(f.at("port") + ": out of range");
  }
  root.done();

  check("model", [&] { cfg.model.validate(); });
  check("mosaic", [&] { cfg.mosaic.validate(cfg.model.spatial_multiple()); });
  cfg.model.gamma = static_cast<float>(cfg.train.gamma);
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const CliOverrides& overrides) {
  Json j;
  try {
    j = read_json(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j, path.parent_path(), overrides);
}

// ---------------------------------------------------------------------------

void write_region(const SynthResult& synth, const fs::path& dir) {
  fs::create_directories(dir);
  write_grid(synth.dem, dir / "dem.hcr");
  write_corrections(synth.truths, dir / "truths.jsonl");
  write_polylines(synth.rivers, dir / "rivers.json");
  write_polylines(synth.roads, dir / "roads.json");
  Json crossings = Json::array();
  for (const auto& c : synth.crossings)
    crossings.push_back({{"location", point_to_json(c.location)}, {"river", c.river}, {"road", c.road}});
  write_json({{"crossings", crossings}, {"decoys", points_to_json(synth.decoys)}}, dir / "crossings.json");
}

Region load_region(const fs::path& dir, const std::string& name) {
  Region r;
  r.name = name;
  r.dir = dir;
  r.dem = read_grid(dir / "dem.hcr");
  if (fs::exists(dir / "truths.jsonl")) r.truths = read_corrections(dir / "truths.jsonl");
  if (fs::exists(dir / "rivers.json")) r.rivers = read_polylines(dir / "rivers.json");
  if (fs::exists(dir / "roads.json")) r.roads = read_polylines(dir / "roads.json");
  return r;
}

std::vector<Region> load_split(const PipelineConfig& cfg, const std::string& split) {
  std::vector<fs::path> dirs;
  if (auto it = cfg.regions.find(split); it != cfg.regions.end()) {
    dirs = it->second;
  } else {
    const fs::path root = cfg.out_dir / "regions" / split;
    if (fs::exists(root))
      for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
  }
  std::vector<Region> out;
  for (const auto& d : dirs) out.push_back(load_region(d, split + "/" + d.filename().string()));
  return out;
}

FeatureStack region_features(const Region& region, const FeatureOptions& options) {
  return build_features(region.dem, region.rivers, region.roads, options);
}

FeatureStack network_features(const Region& region, const FeatureOptions& options) {
  return region_features(region, options).map([](const Grid& g) { return downsample_2x(g); });
}

Json bootstrap_set_to_json(const BootstrapSet& b) {
  Json regions = Json::object();
  std::set<std::string> names;
  for (const auto& [n, v] : b.negatives) names.insert(n);
  for (const auto& [n, v] : b.truths) names.insert(n);
  for (const auto& n : names) {
    Json truths = Json::array();
    if (auto it = b.truths.find(n); it != b.truths.end())
      for (const auto& c : it->second) truths.push_back(correction_to_json(c));
    auto neg = b.negatives.find(n);
    regions[n] = {{"negatives", points_to_json(neg == b.negatives.end() ? std::vector<Point2>{} : neg->second)},
                  {"truths", truths}};
  }
  return {{"regions", regions}};
}

BootstrapSet bootstrap_set_from_json(const Json& j) {
  BootstrapSet b;
  if (!j.is_object() || !j.contains("regions") || !j["regions"].is_object())
    throw IoError("bootstrap file needs a \"regions\" object");
  for (const auto& [name, body] : j["regions"].items()) {
    b.negatives[name] = points_from_json(body.at("negatives"));
    for (const auto& c : body.at("truths")) b.truths[name].push_back(correction_from_json(c));
  }
  return b;
}

std::vector<DatasetTile> build_split_dataset(const std::vector<Region>& regions, const PipelineConfig& cfg,
                                             const BootstrapSet* extras) {
  std::vector<DatasetTile> tiles;
  for (const auto& r : regions) {
    std::vector<Correction> truths = r.truths;
    std::vector<Point2> negatives;
    if (extras) {
      if (auto it = extras->truths.find(r.name); it != extras->truths.end())
        truths.insert(truths.end(), it->second.begin(), it->second.end());
      if (auto it = extras->negatives.find(r.name); it != extras->negatives.end()) negatives = it->second;
    }
    auto t = build_dataset(region_features(r, cfg.features), truths, negatives, cfg.dataset);
    std::move(t.begin(), t.end(), std::back_inserter(tiles));
  }
  return tiles;
}

Grid predict_probability(const segnet::ParamMap<float>& params, const segnet::ModelArch& arch, const Region& region,
                         const PipelineConfig& cfg) {
  return predict_region(params, arch, network_features(region, cfg.features), cfg.mosaic);
}

std::vector<Candidate> extract_region(const Grid& prob, const Region& region, const PipelineConfig& cfg) {
  return extract_candidates(prob, downsample_2x(region.dem), cfg.filter, cfg.seed, cfg.horseshoe_samples);
}

std::vector<Candidate> proposals_of(const std::vector<Candidate>& candidates) {
  std::vector<Candidate> out;
  for (const auto& c : candidates)
    if (c.status != CandidateStatus::Filtered) out.push_back(c);
  return out;
}

double model_tile_auc(const segnet::ParamMap<float>& params, const segnet::ModelArch& arch,
                      const std::vector<DatasetTile>& tiles, bool histogram) {
  std::vector<Grid> preds;
  std::vector<LabelMask> labels;
  for (const auto& t : tiles) {
    preds.push_back(segnet::forward(params, arch, t.features));
    labels.push_back(t.label);
  }
  return tile_auc(preds, labels, histogram);
}

// ---------------------------------------------------------------------------

namespace {

struct Stage {
  const PipelineConfig& cfg;
  std::string command;
  std::vector<fs::path> outputs;

  void log(const std::string& msg) const { std::cerr << "[" << command << "] " << msg << "\n"; }

  fs::path model_path() const { return cfg.out_dir / "model.hcm"; }
  fs::path region_out(const char* stage, const Region& r) const { return cfg.out_dir / stage / r.name; }
  fs::path prob_path(const Region& r) const { return region_out("predict", r) / "prob.hcr"; }
  fs::path candidates_path(const Region& r) const { return region_out("extract", r) / "candidates.jsonl"; }
  fs::path verdicts_path(const Region& r) const { return region_out("extract", r) / "verdicts.jsonl"; }

  void produced(const fs::path& p) { outputs.push_back(p); }

  segnet::Checkpoint model() const {
    if (!fs::exists(model_path())) throw IoError("no trained model at " + model_path().string() + "; run train first");
    return segnet::read_checkpoint(model_path());
  }

  std::vector<Region> split(const std::string& name) const {
    auto regions = load_split(cfg, name);
    if (regions.empty()) throw ConfigError("no regions for split \"" + name + "\"; run synth or set regions." + name);
    return regions;
  }

  void write_manifest() const {
    Json outs = Json::array();
    for (const auto& p : outputs) outs.push_back(fs::relative(p, cfg.out_dir).generic_string());
    const Json m{{"command", command},
                 {"config_hash", hex64(config_hash(cfg.source))},
                 {"seed", cfg.seed},
                 {"version", kVersion},
                 {"outputs", outs},
                 {"config", cfg.source}};
    fs::create_directories(cfg.out_dir / "manifests");
    write_json(m, cfg.out_dir / "manifests" / (command + ".json"));
  }

  void synth() {
    if (cfg.synth.empty()) throw ConfigError("synth: no splits configured");
    for (const auto& s : cfg.synth) {
      for (int i = 0; i < s.count; ++i) {
        SynthParams p = s.params;
        p.seed = derive_seed(cfg.seed ^ fnv1a(s.split), static_cast<std::uint64_t>(i));
        const SynthResult res = synth_terrain(p);
        char name[16];
        std::snprintf(name, sizeof name, "r%03d", i);
        const fs::path dir = cfg.out_dir / "regions" / s.split / name;
        write_region(res, dir);
        produced(dir);
        log(s.split + "/" + name + ": " + std::to_string(res.truths.size()) + " truths, " +
            std::to_string(res.crossings.size()) + " crossings");
      }
    }
  }

  void features() {
    std::set<std::string> splits{cfg.train_split, cfg.val_split, cfg.test_split};
    for (const auto& s : splits) {
      for (const auto& r : load_split(cfg, s)) {
        const FeatureStack f = region_features(r, cfg.features);
        const fs::path dir = region_out("features", r);
        fs::create_directories(dir);
        for (std::size_t i = 0; i < f.channels(); ++i) {
          write_grid(f.layers[i], dir / (f.names[i] + ".hcr"));
          produced(dir / (f.names[i] + ".hcr"));
        }
        log(r.name + ": " + std::to_string(f.channels()) + " layers");
      }
    }
  }

  void train() {
    const auto train_regions = split(cfg.train_split);
    auto val_regions = load_split(cfg, cfg.val_split);
    BootstrapSet extras;
    if (!cfg.train_bootstrap.empty()) extras = bootstrap_set_from_json(read_json(cfg.train_bootstrap));
    const auto train_set = build_split_dataset(train_regions, cfg, cfg.train_bootstrap.empty() ? nullptr : &extras);
    std::vector<DatasetTile> val_set;
    if (val_regions.empty()) {
      log("warning: no validation regions, validating on the training tiles");
      val_set = train_set;
    } else {
      val_set = build_split_dataset(val_regions, cfg);
    }
    if (train_set.empty()) throw ConfigError("train: the training split has no tiles");
    segnet::ModelArch arch = cfg.model;
    arch.input_channels = static_cast<int>(train_set.front().features.channels());
    std::optional<segnet::ParamMap<float>> init;
    if (!cfg.init_model.empty()) {
      auto ck = segnet::read_checkpoint(cfg.init_model);
      if (ck.arch.depth != arch.depth || ck.arch.base_channels != arch.base_channels ||
          ck.arch.input_channels != arch.input_channels)
        throw ConfigError("train.init_model: architecture does not match the configuration");
      init = std::move(ck.tensors);
    }
    log(std::to_string(train_set.size()) + " training tiles, " + std::to_string(val_set.size()) + " validation tiles");
    const auto result = segnet::train(train_set, val_set, arch, cfg.train, init, [&](const segnet::EpochStats& s) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %d train %.4f val %.4f%s", s.epoch, s.train_loss, s.val_loss,
                    s.improved ? " *" : "");
      log(buf);
    });
    fs::create_directories(cfg.out_dir);
    segnet::write_checkpoint({arch, result.best_params}, model_path());
    segnet::write_checkpoint(segnet::optimizer_checkpoint(arch, result.optimizer), segnet::optimizer_path(model_path()));
    Json hist = Json::array();
    for (const auto& s : result.history)
      hist.push_back({{"epoch", s.epoch}, {"train_loss", s.train_loss}, {"val_loss", s.val_loss}});
    write_json({{"history", hist},
                {"initial_val_loss", result.initial_val_loss},
                {"best_val_loss", result.best_val_loss},
                {"best_epoch", result.best_epoch}},
               cfg.out_dir / "train_history.json");
    produced(model_path());
    produced(segnet::optimizer_path(model_path()));
    produced(cfg.out_dir / "train_history.json");
  }

  Grid predict_one(const segnet::Checkpoint& ck, const Region& r) {
    const Grid prob = predict_probability(ck.tensors, ck.arch, r, cfg);
    fs::create_directories(prob_path(r).parent_path());
    write_grid(prob, prob_path(r));
    produced(prob_path(r));
    return prob;
  }

  std::vector<Candidate> extract_one(const Grid& prob, const Region& r) {
    auto cands = extract_region(prob, r, cfg);
    fs::create_directories(candidates_path(r).parent_path());
    write_candidates(cands, candidates_path(r));
    produced(candidates_path(r));
    std::size_t proposed = 0, fitted = 0;
    for (const auto& c : cands) {
      proposed += c.status == CandidateStatus::Proposed;
      fitted += c.horseshoe.has_value();
    }
    log(r.name + ": " + std::to_string(cands.size()) + " contours, " + std::to_string(proposed) + " proposed, " +
        std::to_string(fitted) + " horseshoes");
    return cands;
  }

  void predict() {
    const auto ck = model();
    for (const auto& r : split(cfg.test_split)) {
      predict_one(ck, r);
      log(r.name + ": probability map written");
    }
  }

  void extract() {
    for (const auto& r : split(cfg.test_split)) {
      if (!fs::exists(prob_path(r))) throw IoError("missing " + prob_path(r).string() + "; run predict first");
      extract_one(read_grid(prob_path(r)), r);
    }
  }

  void eval() {
    const auto regions = split(cfg.test_split);
    std::vector<RegionDetections> dets;
    Json per_region = Json::object();
    for (const auto& r : regions) {
      if (!fs::exists(candidates_path(r))) throw IoError("missing " + candidates_path(r).string() + "; run extract first");
      RegionDetections d{proposals_of(read_candidates(candidates_path(r))), r.truths};
      per_region[r.name] = eval_report_to_json(evaluate(d.proposals, d.truths, cfg.match_radius, cfg.eval_threshold));
      dets.push_back(std::move(d));
    }
    EvalReport report = evaluate(dets, cfg.match_radius, cfg.eval_threshold);
    if (fs::exists(model_path())) {
      const auto ck = model();
      const auto tiles = build_split_dataset(regions, cfg);
      try {
        report.auc = model_tile_auc(ck.tensors, ck.arch, tiles);
      } catch (const UndefinedAucError& e) {
        log(std::string("auc skipped: ") + e.what());
      }
    }
    Json j = eval_report_to_json(report);
    j["regions"] = per_region;
    fs::create_directories(cfg.out_dir);
    write_json(j, cfg.out_dir / "eval.json");
    produced(cfg.out_dir / "eval.json");
    char buf[160];
    std::snprintf(buf, sizeof buf, "max_recall %.3f mP %.3f tp %zu fp %zu fn %zu", report.max_recall, report.mP,
                  report.tp, report.fp, report.fn);
    log(buf);
  }

  void bootstrap() {
    const auto ck = model();
    BootstrapSet set;
    for (const auto& r : split(cfg.bootstrap_split)) {
      const std::vector<Candidate> cands =
          fs::exists(candidates_path(r)) ? read_candidates(candidates_path(r)) : extract_one(predict_one(ck, r), r);
      const auto proposals = proposals_of(cands);
      const auto sampled = bootstrap_sample(proposals, match_detections(proposals, r.truths, cfg.match_radius),
                                            cfg.bootstrap);
      std::vector<Verdict> verdicts;
      if (fs::exists(verdicts_path(r))) verdicts = VerdictLog(verdicts_path(r)).entries();
      const BootstrapExport e = export_bootstrap(verdicts, cands, sampled);
      set.negatives[r.name] = e.negatives;
      set.truths[r.name] = e.truths;
      log(r.name + ": " + std::to_string(sampled.size()) + " sampled, " + std::to_string(e.negatives.size()) +
          " negatives, " + std::to_string(e.truths.size()) + " accepted truths");
    }
    write_json(bootstrap_set_to_json(set), cfg.out_dir / "bootstrap.json");
    produced(cfg.out_dir / "bootstrap.json");
  }

  void serve() {
    const auto regions = split(cfg.test_split);
    const Region* region = &regions.front();
    std::vector<Region> chosen;
    if (!cfg.serve.region.empty()) {
      const auto slash = cfg.serve.region.find('/');
      if (slash == std::string::npos) throw ConfigError("serve.region: expected <split>/<name>");
      chosen = load_split(cfg, cfg.serve.region.substr(0, slash));
      auto it = std::find_if(chosen.begin(), chosen.end(), [&](const Region& r) { return r.name == cfg.serve.region; });
      if (it == chosen.end()) throw ConfigError("serve.region: unknown region " + cfg.serve.region);
      region = &*it;
    }
    ReviewData data;
    data.candidates = read_candidates(candidates_path(*region));
    data.prob = read_grid(prob_path(*region));
    data.dem = downsample_2x(region->dem);
    const auto proposals = proposals_of(data.candidates);
    data.sampled_negatives =
        bootstrap_sample(proposals, match_detections(proposals, region->truths, cfg.match_radius), cfg.bootstrap);
    VerdictLog log_file(verdicts_path(*region));
    ReviewOptions opts;
    opts.static_dir = cfg.serve.static_dir;
    ReviewService service(std::move(data), log_file, opts);
    const int port = service.bind(cfg.serve.host, cfg.serve.port);
    produced(verdicts_path(*region));
    write_manifest();
    log("serving " + region->name + " on http://" + cfg.serve.host + ":" + std::to_string(port));
    service.run();
  }
};

}  // namespace

int run_command(const std::string& command, const PipelineConfig& cfg) {
  Stage stage{cfg, command, {}};
  try {
    if (command == "synth") {
      stage.synth();
    } else if (command == "features") {
      stage.features();
    } else if (command == "train") {
      stage.train();
    } else if (command == "predict") {
      stage.predict();
    } else if (command == "extract") {
      stage.extract();
    } else if (command == "eval") {
      stage.eval();
    } else if (command == "bootstrap") {
      stage.bootstrap();
    } else if (command == "serve") {
      stage.serve();
      return 0;
    } else {
      std::cerr << "unknown command: " << command << "\n";
      return 2;
    }
    stage.write_manifest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << command << " failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace hydrofix
