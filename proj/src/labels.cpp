#include "hydrofix/labels.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "hydrofix/error.hpp"

namespace hydrofix {

namespace {

// 3x3 box sum with zero padding, computed separably.
RasterD box_sum3(const RasterD& x) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  RasterD h = RasterD::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      h(r, c) = x(r, c) + (c > 0 ? x(r, c - 1) : 0.0) + (c + 1 < cols ? x(r, c + 1) : 0.0);
  RasterD out = RasterD::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      out(r, c) = h(r, c) + (r > 0 ? h(r - 1, c) : 0.0) + (r + 1 < rows ? h(r + 1, c) : 0.0);
  return out;
}

struct Window {
  Eigen::Index row0, col0;
};

Window tile_window(const Grid& g, const Point2& center, Eigen::Index tile) {
  const Point2 cell = g.world_to_cell(center);
  auto place = [tile](double c, Eigen::Index extent) {
    const double start = c + 0.5 - 0.5 * static_cast<double>(tile);
    Eigen::Index s = 2 * static_cast<Eigen::Index>(std::lround(start / 2.0));
    const Eigen::Index max_start = extent - tile;
    s = std::clamp<Eigen::Index>(s, 0, max_start);
    // Keep the even alignment when the clamp lands on an odd border offset.
    if (s % 2 != 0) --s;
    return s;
  };
  return {place(cell.y(), g.height()), place(cell.x(), g.width())};
}

bool bbox_overlaps(const Correction& c, double pad, const WorldRect& r) {
  const Point2 lo = c.p0.cwiseMin(c.p1) - Point2::Constant(pad);
  const Point2 hi = c.p0.cwiseMax(c.p1) + Point2::Constant(pad);
  return !(hi.x() < r.min_x || lo.x() > r.max_x || hi.y() < r.min_y || lo.y() > r.max_y);
}

}  // namespace

std::size_t LabelMask::correction_count() const {
  std::set<std::int32_t> seen;
  for (Eigen::Index i = 0; i < ids.size(); ++i)
    if (ids.data()[i] != 0) seen.insert(ids.data()[i]);
  return seen.size();
}

LabelMask rasterize_corrections(const std::vector<Correction>& corrections, const Grid& templ,
                                double line_half_width) {
  if (!(line_half_width > 0)) throw InvalidArgument("rasterize_corrections: line_half_width must be positive");
  LabelMask out{templ.like(0.0f), IdRaster::Zero(templ.height(), templ.width())};
  for (std::size_t k = 0; k < corrections.size(); ++k) {
    const Correction& corr = corrections[k];
    const bool is_line = corr.kind == CorrectionKind::Line;
    const double pad = is_line ? line_half_width : 0.5 * corr.width;
    const OrientedRect rect{corr.p0, corr.p1, pad};
    const Point2 lo = out.mask.world_to_cell(corr.p0.cwiseMin(corr.p1) - Point2::Constant(pad));
    const Point2 hi = out.mask.world_to_cell(corr.p0.cwiseMax(corr.p1) + Point2::Constant(pad));
    const Eigen::Index c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(lo.x())));
    const Eigen::Index r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(lo.y())));
    const Eigen::Index c1 = std::min<Eigen::Index>(templ.width() - 1, static_cast<Eigen::Index>(std::ceil(hi.x())));
    const Eigen::Index r1 = std::min<Eigen::Index>(templ.height() - 1, static_cast<Eigen::Index>(std::ceil(hi.y())));
    for (Eigen::Index r = r0; r <= r1; ++r) {
      for (Eigen::Index c = c0; c <= c1; ++c) {
        const Point2 q = templ.cell_center(r, c);
        const bool inside = is_line ? point_segment_distance(q, corr.p0, corr.p1) <= line_half_width : rect.contains(q);
        if (!inside) continue;
        out.mask(r, c) = 1.0f;
        out.ids(r, c) = static_cast<std::int32_t>(k + 1);
      }
    }
  }
  return out;
}

WeightTerms weight_terms(const LabelMask& label) {
  const Eigen::Index rows = label.mask.height(), cols = label.mask.width();
  std::unordered_map<std::int32_t, std::size_t> counts;
  for (Eigen::Index i = 0; i < label.ids.size(); ++i)
    if (label.ids.data()[i] != 0) ++counts[label.ids.data()[i]];

  WeightTerms t;
  t.L = RasterD::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (label.mask(r, c) != 0.0f && label.ids(r, c) != 0)
        t.L(r, c) = 1.0 / static_cast<double>(counts[label.ids(r, c)]);
  // E_kernel = (9/8) delta - (1/8) box3, B_kernel = box3 / 9.
  t.E = 1.125 * t.L - 0.125 * box_sum3(t.L);
  t.B = box_sum3(t.E) / 9.0;
  t.W = (t.L + t.E + t.B).array() + 1.0 / std::sqrt(static_cast<double>(rows * cols));
  return t;
}

WeightMap weight_map(const LabelMask& label) {
  const WeightTerms t = weight_terms(label);
  WeightMap w{label.mask.like(0.0f)};
  w.weights.values = t.W.cast<float>();
  return w;
}

std::vector<DatasetTile> build_dataset(const FeatureStack& region, const std::vector<Correction>& truths,
                                       const std::vector<Point2>& extra_centers, const DatasetOptions& options) {
  region.validate();
  const Eigen::Index tile = options.tile_cells;
  if (tile < 2 || tile % 2 != 0) throw InvalidArgument("build_dataset: tile_cells must be even");
  const Grid& dem = region.elevation();
  if (dem.width() < tile || dem.height() < tile) throw InvalidArgument("build_dataset: region smaller than a tile");
  const WorldRect extent = dem.extent();
  for (const auto& t : truths) {
    t.validate();
    if (!extent.contains(t.centroid())) throw OutOfBoundsError("build_dataset: truth " + t.id + " outside region");
  }

  std::vector<std::pair<Point2, Provenance>> centers;
  for (const auto& t : truths) centers.emplace_back(t.centroid(), Provenance::CorrectionCentered);
  for (const auto& p : extra_centers) centers.emplace_back(p, options.extra_provenance);

  std::vector<DatasetTile> tiles;
  tiles.reserve(centers.size());
  for (const auto& [center, provenance] : centers) {
    const Window w = tile_window(dem, center, tile);
    DatasetTile out;
    out.provenance = provenance;
    out.center = center;
    out.features = region.map([&](const Grid& g) { return downsample_2x(crop(g, w.row0, w.col0, tile, tile)); });
    const Grid& tile_dem = out.features.elevation();
    const WorldRect tile_extent = tile_dem.extent();
    std::vector<Correction> local;
    for (const auto& t : truths)
      if (bbox_overlaps(t, std::max(options.line_half_width, 0.5 * t.width), tile_extent)) local.push_back(t);
    out.label = rasterize_corrections(local, tile_dem, options.line_half_width);
    out.weight = weight_map(out.label);
    // Nodata is never a correction and carries no weight.
    for (Eigen::Index i = 0; i < tile_dem.size(); ++i) {
      if (tile_dem.values.data()[i] == tile_dem.nodata) {
        out.label.mask.values.data()[i] = 0.0f;
        out.label.ids.data()[i] = 0;
        out.weight.weights.values.data()[i] = 0.0f;
      }
    }
    tiles.push_back(std::move(out));
  }
  return tiles;
}

DatasetTile transform_tile(const DatasetTile& tile, Eigen::Index row0, Eigen::Index col0, Eigen::Index size,
                           bool flip_h, bool flip_v) {
  DatasetTile out;
  out.provenance = tile.provenance;
  out.center = tile.center;
  out.features = tile.features.map([&](const Grid& g) { return flip(crop(g, row0, col0, size, size), flip_h, flip_v); });
  out.label.mask = flip(crop(tile.label.mask, row0, col0, size, size), flip_h, flip_v);
  out.label.ids = flip_matrix(tile.label.ids.block(row0, col0, size, size), flip_h, flip_v);
  out.weight.weights = flip(crop(tile.weight.weights, row0, col0, size, size), flip_h, flip_v);
  return out;
}

DatasetTile augment(const DatasetTile& tile, Eigen::Index crop_cells, Rng& rng) {
  const Eigen::Index rows = tile.label.mask.height(), cols = tile.label.mask.width();
  if (crop_cells < 1 || crop_cells > rows || crop_cells > cols)
    throw InvalidArgument("augment: crop larger than tile");
  const auto row0 = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(rows - crop_cells + 1)));
  const auto col0 = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(cols - crop_cells + 1)));
  const bool fh = rng.coin();
  const bool fv = rng.coin();
  return transform_tile(tile, row0, col0, crop_cells, fh, fv);
}

}  // namespace hydrofix
