// hydrofix command-line entry point.
#include <CLI11.hpp>

#include <iostream>

#include "hydrofix/error.hpp"
#include "hydrofix/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hydrological correction detection in elevation models"};
  app.set_version_flag("--version", hydrofix::kVersion);
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  double threshold = 0.0;

  const char* commands[][2] = {
      {"synth", "generate synthetic regions"},
      {"features", "write feature rasters"},
      {"train", "train the segmentation network"},
      {"predict", "mosaic probability maps"},
      {"extract", "contour, filter and fit candidates"},
      {"eval", "match candidates and write the evaluation report"},
      {"bootstrap", "collect bootstrap negatives and reviewed truths"},
      {"serve", "run the review API"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--threshold", threshold, "contour level override")->check(CLI::Range(0.0, 1.0));
  }

  CLI11_PARSE(app, argc, argv);
  const auto* sub = app.get_subcommands().front();

  hydrofix::CliOverrides overrides;
  if (sub->count("--out")) overrides.out_dir = out;
  if (sub->count("--seed")) overrides.seed = seed;
  if (sub->count("--threshold")) overrides.threshold = threshold;

  try {
    const auto cfg = hydrofix::load_config(config, overrides);
    return hydrofix::run_command(sub->get_name(), cfg);
  } catch (const hydrofix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
