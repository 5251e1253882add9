#include "hydrofix/mosaic.hpp"

#include <cmath>
#include <numbers>

#include "hydrofix/error.hpp"

namespace hydrofix {

void MosaicConfig::validate(int spatial_multiple) const {
  if (stride < 2) throw InvalidArgument("mosaic stride must be >= 2");
  if (tile() % spatial_multiple != 0) throw InvalidArgument("mosaic tile side must be divisible by 2^depth");
}

Eigen::VectorXd window_1d(int stride) {
  if (stride < 2) throw InvalidArgument("window stride must be >= 2");
  Eigen::VectorXd h(2 * stride);
  for (int i = 0; i < 2 * stride; ++i) {
    const double s = std::sin(std::numbers::pi * (i + 0.5) / (2.0 * stride));
    h[i] = s * s;
  }
  return h;
}

RasterD window_2d(int stride) {
  const Eigen::VectorXd h = window_1d(stride);
  return h * h.transpose();
}

std::vector<int> tile_offsets(int extent, int stride) {
  const int tile = 2 * stride;
  if (extent < tile) throw InvalidArgument("region smaller than one tile");
  std::vector<int> out;
  for (int o = 0; o + tile <= extent; o += stride) out.push_back(o);
  if (out.back() + tile < extent) out.push_back(extent - tile);
  return out;
}

Grid predict_region(const FeatureStack& region, const MosaicConfig& cfg, const TilePredictor& predictor,
                    TileSchedule schedule) {
  cfg.validate();
  region.validate();
  const int tile = cfg.tile();
  const Grid& base = region.elevation();
  if (base.width() < tile || base.height() < tile) throw InvalidArgument("predict_region: region smaller than one tile");
  const std::vector<int> rows = tile_offsets(static_cast<int>(base.height()), cfg.stride);
  const std::vector<int> cols = tile_offsets(static_cast<int>(base.width()), cfg.stride);

  std::vector<RasterF> preds(rows.size() * cols.size());
  auto eval = [&](std::size_t i, std::size_t j) {
    const FeatureStack t = region.map([&](const Grid& g) { return crop(g, rows[i], cols[j], tile, tile); });
    RasterF x = predictor(t);
    if (x.rows() != tile || x.cols() != tile) throw ShapeMismatchError("tile predictor returned wrong shape");
    preds[i * cols.size() + j] = std::move(x);
  };
  if (schedule == TileSchedule::RowMajor) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) eval(i, j);
  } else {
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < rows.size(); ++i) eval(i, j);
  }

  const RasterD window = window_2d(cfg.stride);
  RasterD num = RasterD::Zero(base.height(), base.width());
  RasterD den = RasterD::Zero(base.height(), base.width());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      num.block(rows[i], cols[j], tile, tile).array() +=
          window.array() * preds[i * cols.size() + j].cast<double>().array();
      den.block(rows[i], cols[j], tile, tile) += window;
    }
  }
  Grid out = base.like(0.0f);
  out.values = (num.array() / den.array().max(1e-12)).cast<float>();
  return out;
}

Grid predict_region(const segnet::ParamMap<float>& params, const segnet::ModelArch& arch, const FeatureStack& region,
                    const MosaicConfig& cfg) {
  cfg.validate(arch.spatial_multiple());
  segnet::keep_heap_mapped();
  return predict_region(region, cfg, [&](const FeatureStack& tile) { return segnet::forward(params, arch, tile).values; });
}

}  // namespace hydrofix
