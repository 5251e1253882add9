#pragma once

#include <cstdint>
#include <vector>

#include "hydrofix/correction.hpp"
#include "hydrofix/hydro.hpp"
#include "hydrofix/raster.hpp"
#include "hydrofix/rng.hpp"

namespace hydrofix {

using IdRaster = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary label raster plus, per set cell, 1 + the index of the correction
/// that claimed it (0 where the mask is 0).
struct LabelMask {
  Grid mask;
  IdRaster ids;

  /// Number of distinct corrections with at least one cell.
  std::size_t correction_count() const;
};

struct WeightMap {
  Grid weights;
};

/// Intermediate terms of the weight map, exposed for inspection and tests.
struct WeightTerms {
  RasterD L, E, B, W;
};

enum class Provenance { CorrectionCentered, Bootstrapped, VerdictNegative };

struct DatasetTile {
  FeatureStack features;
  LabelMask label;
  WeightMap weight;
  Provenance provenance = Provenance::CorrectionCentered;
  Point2 center = Point2::Zero();  ///< world point the tile was cut around
};

inline constexpr double kDefaultLineHalfWidth = 0.8;

/// Cell is set iff its center lies inside a correction: the HorseShoe
/// rectangle, or within line_half_width of a Line segment. Later corrections
/// win the id map.
LabelMask rasterize_corrections(const std::vector<Correction>& corrections, const Grid& templ,
                                double line_half_width = kDefaultLineHalfWidth);

/// W = 1/sqrt(wh) + E + B + L with E = L * E_kernel, B = E * B_kernel, zero
/// padded.
WeightTerms weight_terms(const LabelMask& label);
WeightMap weight_map(const LabelMask& label);

struct DatasetOptions {
  Eigen::Index tile_cells = 128;  ///< tile side before the 2x downsample
  double line_half_width = kDefaultLineHalfWidth;
  Provenance extra_provenance = Provenance::Bootstrapped;
};

/// One tile per truth centered on its centroid, then one per extra center.
/// Tiles are aligned to even cell offsets so their features equal a crop of
/// the 2x-downsampled region; tiles touching the border are shifted inward.
std::vector<DatasetTile> build_dataset(const FeatureStack& region, const std::vector<Correction>& truths,
                                       const std::vector<Point2>& extra_centers,
                                       const DatasetOptions& options = {});

/// Random crop_cells x crop_cells window plus independent 50/50 horizontal
/// and vertical flips, applied identically to features, label and weight.
DatasetTile augment(const DatasetTile& tile, Eigen::Index crop_cells, Rng& rng);

/// Deterministic variant used by tests: explicit window and flips.
DatasetTile transform_tile(const DatasetTile& tile, Eigen::Index row0, Eigen::Index col0, Eigen::Index size,
                           bool flip_h, bool flip_v);

}  // namespace hydrofix
