#include <algorithm>
#include <cmath>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "hydrofix/error.hpp"
#include "hydrofix/segnet/model.hpp"
#include "hydrofix/segnet/train.hpp"

namespace hydrofix::segnet {

void ModelArch::validate() const {
  if (depth < 1) throw InvalidArgument("model depth must be >= 1");
  if (base_channels < 1) throw InvalidArgument("model base_channels must be >= 1");
  if (input_channels < 1) throw InvalidArgument("model input_channels must be >= 1");
  if (!(gamma >= 0)) throw InvalidArgument("focal gamma must be >= 0");
}

Grid forward(const ParamMap<float>& params, const ModelArch& arch, const FeatureStack& input) {
  const Grid& dem = input.elevation();
  const Matrix<float> probs = predict_matrix<float>(params, arch, input_matrix<float>(input),
                                                    static_cast<int>(dem.height()), static_cast<int>(dem.width()));
  Grid out = dem.like(0.0f);
  out.values = Eigen::Map<const RasterF>(probs.data(), dem.height(), dem.width());
  return out;
}

double focal_loss(const Grid& pred, const LabelMask& label, const WeightMap& weight, double gamma) {
  if (pred.size() != label.mask.size() || pred.size() != weight.weights.size())
    throw ShapeMismatchError("focal_loss: dims differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    total += static_cast<double>(weight.weights.values.data()[i]) *
             focal_term<double>(pred.values.data()[i], label.mask.values.data()[i] >= 0.5f, gamma);
  }
  return total;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(gamma >= 0)) throw InvalidArgument("gamma must be >= 0");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || !(epsilon > 0))
    throw InvalidArgument("ADAM betas must lie in (0,1) and epsilon must be positive");
  if (crop_cells < 0) throw InvalidArgument("crop_cells must be >= 0");
}

double mean_loss(const ParamMap<float>& params, const ModelArch& arch, const std::vector<DatasetTile>& tiles,
                 double gamma) {
  if (tiles.empty()) return 0.0;
  double total = 0.0;
  for (const auto& tile : tiles)
    total += batch_loss<float>(params, arch, std::span<const DatasetTile>(&tile, 1), static_cast<float>(gamma));
  return total / static_cast<double>(tiles.size());
}

int effective_crop(const TrainConfig& cfg, const ModelArch& arch, Eigen::Index tile_side) {
  const int multiple = arch.spatial_multiple();
  int crop = cfg.crop_cells > 0 ? cfg.crop_cells : static_cast<int>(0.875 * static_cast<double>(tile_side));
  crop = crop / multiple * multiple;
  if (crop < multiple || crop > tile_side) throw InvalidArgument("augmentation crop does not fit the tile");
  return crop;
}

void keep_heap_mapped() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

TrainResult train(const std::vector<DatasetTile>& train_set, const std::vector<DatasetTile>& val_set,
                  const ModelArch& arch, const TrainConfig& cfg, const std::optional<ParamMap<float>>& initial,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  keep_heap_mapped();
  if (train_set.empty() || val_set.empty()) throw InvalidArgument("train: training and validation sets must be nonempty");

  ParamMap<float> params = initial ? *initial : init_params<float>(arch, cfg.seed);
  TrainResult result;
  result.best_params = params;
  result.optimizer = AdamState<float>::zeros(params);
  result.initial_val_loss = mean_loss(params, arch, val_set, cfg.gamma);
  result.best_val_loss = result.initial_val_loss;
  if (cfg.epochs == 0) return result;

  const int crop = effective_crop(cfg, arch, train_set.front().label.mask.width());
  const AdamConfig adam = cfg.adam();
  const auto gamma = static_cast<float>(cfg.gamma);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<DatasetTile> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        Rng sample_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) * 1000003ULL + order[k]));
        batch.push_back(augment(train_set[order[k]], crop, sample_rng));
      }
      BatchGradient<float> g = backward<float>(params, arch, batch, gamma);
      if (!std::isfinite(g.loss)) throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += g.loss;
      adam_step(params, g.grads, result.optimizer, adam);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(order.size());
    stats.val_loss = mean_loss(params, arch, val_set, cfg.gamma);
    if (!std::isfinite(stats.val_loss)) throw DivergenceError("training diverged: non-finite validation loss");
    if (stats.val_loss < result.best_val_loss) {
      stats.improved = true;
      result.best_val_loss = stats.val_loss;
      result.best_params = params;
      result.best_epoch = epoch;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace hydrofix::segnet
