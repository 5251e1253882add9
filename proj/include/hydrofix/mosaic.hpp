#pragma once

#include <functional>
#include <vector>

#include "hydrofix/hydro.hpp"
#include "hydrofix/segnet/model.hpp"

namespace hydrofix {

/// Overlap-add tiling: tiles of side 2*stride placed every stride cells.
struct MosaicConfig {
  int stride = 32;

  int tile() const { return 2 * stride; }
  void validate(int spatial_multiple = 1) const;
};

/// h_i = sin^2(pi (i + 0.5) / (2s)), i in [0, 2s). Satisfies h_i + h_{i+s} = 1.
Eigen::VectorXd window_1d(int stride);
/// H = h h^T.
RasterD window_2d(int stride);

/// Tile start offsets 0, s, 2s, ... with the last one clamped so the final
/// tile ends on the region edge.
std::vector<int> tile_offsets(int extent, int stride);

/// Maps one tile (all channels, tile x tile) to per-cell probabilities.
using TilePredictor = std::function<RasterF(const FeatureStack& tile)>;

enum class TileSchedule { RowMajor, ColumnMajor };

/// Window-weighted average of tile predictions. The schedule only changes
/// the order tiles are evaluated in; accumulation always runs in row-major
/// tile order so the result is bit-identical either way.
Grid predict_region(const FeatureStack& region, const MosaicConfig& cfg, const TilePredictor& predictor,
                    TileSchedule schedule = TileSchedule::RowMajor);

Grid predict_region(const segnet::ParamMap<float>& params, const segnet::ModelArch& arch, const FeatureStack& region,
                    const MosaicConfig& cfg);

}  // namespace hydrofix
