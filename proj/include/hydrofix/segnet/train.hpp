#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "hydrofix/labels.hpp"
#include "hydrofix/segnet/adam.hpp"
#include "hydrofix/segnet/model.hpp"

namespace hydrofix::segnet {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 50;
  double gamma = 2.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  /// Augmentation crop side in network-input cells; 0 selects 87.5% of the
  /// tile side rounded down to a multiple of 2^depth.
  int crop_cells = 0;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;  ///< mean per-tile loss over the epoch's augmented samples
  double val_loss = 0;    ///< mean per-tile validation loss
  bool improved = false;
};

struct TrainResult {
  ParamMap<float> best_params;
  AdamState<float> optimizer;  ///< state after the last epoch
  std::vector<EpochStats> history;
  double initial_val_loss = 0;
  double best_val_loss = 0;
  int best_epoch = -1;  ///< -1 when the initial parameters were never beaten
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mean per-tile loss without augmentation.
double mean_loss(const ParamMap<float>& params, const ModelArch& arch, const std::vector<DatasetTile>& tiles,
                 double gamma);

int effective_crop(const TrainConfig& cfg, const ModelArch& arch, Eigen::Index tile_side);

/// Seeded shuffle, augmentation and mini-batch ADAM; keeps the parameters
/// with the lowest validation loss. `initial` overrides seeded init.
TrainResult train(const std::vector<DatasetTile>& train_set, const std::vector<DatasetTile>& val_set,
                  const ModelArch& arch, const TrainConfig& cfg,
                  const std::optional<ParamMap<float>>& initial = std::nullopt,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace hydrofix::segnet
