#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace hydrofix {

using RasterF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RasterD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Point2 = Eigen::Vector2d;

inline constexpr float kDefaultNodata = -9999.0f;

/// Axis-aligned world rectangle in meters.
struct WorldRect {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool contains(const Point2& p) const {
    return p.x() >= min_x && p.x() <= max_x && p.y() >= min_y && p.y() <= max_y;
  }
};

/// Georeferenced single-band raster.
///
/// Row 0 is the southernmost row; cell (row, col) has its center at
/// origin + (col + 0.5, row + 0.5) * cell_size.
struct Grid {
  RasterF values;
  double cell_size = 1.0;
  Point2 origin = Point2::Zero();
  float nodata = kDefaultNodata;

  Grid() = default;
  Grid(Eigen::Index height, Eigen::Index width, double cell_size_m, Point2 origin_m = Point2::Zero(),
       float fill = 0.0f, float nodata_value = kDefaultNodata);

  Eigen::Index width() const { return values.cols(); }
  Eigen::Index height() const { return values.rows(); }
  Eigen::Index size() const { return values.size(); }

  float& operator()(Eigen::Index row, Eigen::Index col) { return values(row, col); }
  float operator()(Eigen::Index row, Eigen::Index col) const { return values(row, col); }

  bool is_nodata(Eigen::Index row, Eigen::Index col) const { return values(row, col) == nodata; }

  Point2 cell_center(Eigen::Index row, Eigen::Index col) const {
    return origin + Point2(col + 0.5, row + 0.5) * cell_size;
  }
  /// Fractional (col, row) coordinates of a world point; cell centers land on
  /// integers.
  Point2 world_to_cell(const Point2& p) const { return (p - origin) / cell_size - Point2(0.5, 0.5); }

  WorldRect extent() const {
    return {origin.x(), origin.y(), origin.x() + width() * cell_size, origin.y() + height() * cell_size};
  }

  /// Same georeference and dims, new fill value.
  Grid like(float fill = 0.0f) const;

  void validate() const;
};

bool same_georeference(const Grid& a, const Grid& b);

// HCR1 raster files.
void write_grid(const Grid& grid, const std::filesystem::path& path);
Grid read_grid(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_grid(const Grid& grid);
Grid deserialize_grid(const std::vector<std::uint8_t>& bytes);

/// 2x2 block mean. Any nodata in a block yields nodata.
Grid downsample_2x(const Grid& grid);
Grid crop(const Grid& grid, Eigen::Index row0, Eigen::Index col0, Eigen::Index rows, Eigen::Index cols);
/// horizontal mirrors columns, vertical mirrors rows.
Grid flip(const Grid& grid, bool horizontal, bool vertical);

template <typename Derived>
auto flip_matrix(const Eigen::MatrixBase<Derived>& m, bool horizontal, bool vertical) {
  using Plain = typename Derived::PlainObject;
  Plain out = m;
  if (horizontal) out = out.rowwise().reverse().eval();
  if (vertical) out = out.colwise().reverse().eval();
  return out;
}

}  // namespace hydrofix
