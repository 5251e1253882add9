#pragma once

#include <string>
#include <vector>

#include "hydrofix/geometry.hpp"
#include "hydrofix/raster.hpp"

namespace hydrofix {

/// Aligned feature layers fed to the segmenter; layer 0 is elevation.
struct FeatureStack {
  std::vector<Grid> layers;
  std::vector<std::string> names;

  std::size_t channels() const { return layers.size(); }
  const Grid& elevation() const { return layers.front(); }
  Eigen::Index width() const { return layers.front().width(); }
  Eigen::Index height() const { return layers.front().height(); }

  void add(std::string name, Grid layer);
  void validate() const;

  FeatureStack map(const auto& fn) const {
    FeatureStack out;
    out.names = names;
    for (const auto& l : layers) out.layers.push_back(fn(l));
    return out;
  }
};

/// Single-direction (D8) flow accumulation: cells are visited from highest to
/// lowest and pass their accumulated units to the lowest strictly lower
/// neighbor. Neighbor ties resolve in E, N, W, S, NE, NW, SW, SE order; height
/// ties resolve by row-major index.
Grid flow_accumulation(const Grid& dem);

/// Priority-flood depression filling (8-connected). Nodata cells are treated
/// as outside the DEM.
Grid fill_depressions(const Grid& dem);

/// fill_depressions(dem) - dem, the standing water depth layer.
Grid depression_depth(const Grid& dem);

/// 1.0 where a cell center lies within half_width of any segment, else 0.0.
Grid rasterize_polylines(const std::vector<Polyline>& lines, const Grid& templ, double half_width);

/// Layer selection for build_features. Layer names are "elevation", "flow"
/// (log1p-compressed accumulation), "fill" (depression depth), "rivers" and
/// "roads".
struct FeatureOptions {
  bool flow = false;
  bool fill = false;
  bool vectors = false;
  double vector_half_width = 2.0;
};

FeatureStack build_features(const Grid& dem, const std::vector<Polyline>& rivers,
                            const std::vector<Polyline>& roads, const FeatureOptions& options);

}  // namespace hydrofix
