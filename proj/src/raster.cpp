#include "hydrofix/raster.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "byte_io.hpp"
#include "hydrofix/error.hpp"

namespace hydrofix {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'R', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxCells = std::uint64_t{1} << 31;

}  // namespace

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

Grid::Grid(Eigen::Index height, Eigen::Index width, double cell_size_m, Point2 origin_m, float fill,
           float nodata_value)
    : values(RasterF::Constant(height, width, fill)),
      cell_size(cell_size_m),
      origin(std::move(origin_m)),
      nodata(nodata_value) {
  validate();
}

Grid Grid::like(float fill) const {
  Grid g = *this;
  g.values.setConstant(fill);
  return g;
}

void Grid::validate() const {
  if (values.rows() < 1 || values.cols() < 1) throw InvalidArgument("grid must be at least 1x1");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw InvalidArgument("cell_size must be positive");
}

bool same_georeference(const Grid& a, const Grid& b) {
  return a.width() == b.width() && a.height() == b.height() && a.cell_size == b.cell_size &&
         a.origin == b.origin;
}

std::vector<std::uint8_t> serialize_grid(const Grid& grid) {
  grid.validate();
  detail::ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(grid.width()));
  w.u32(static_cast<std::uint32_t>(grid.height()));
  w.f64(grid.cell_size);
  w.f64(grid.origin.x());
  w.f64(grid.origin.y());
  w.f32(grid.nodata);
  w.u32(0);
  w.bytes().reserve(w.bytes().size() + 4 * static_cast<std::size_t>(grid.size()));
  const float* data = grid.values.data();
  for (Eigen::Index i = 0; i < grid.size(); ++i) w.f32(data[i]);
  return std::move(w.bytes());
}

Grid deserialize_grid(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader<MalformedHeaderError> header(bytes.data(), bytes.size());
  const std::string magic = header.str(4, "magic");
  if (magic != std::string(kMagic, 4)) throw MalformedHeaderError("bad magic, expected HCR1");
  if (header.u32("version") != kVersion) throw MalformedHeaderError("unsupported HCR1 version");
  const std::uint32_t width = header.u32("width");
  const std::uint32_t height = header.u32("height");
  const double cell_size = header.f64("cell_size");
  const double ox = header.f64("origin_x");
  const double oy = header.f64("origin_y");
  const float nodata = header.f32("nodata");
  if (header.u32("reserved") != 0) throw MalformedHeaderError("reserved field must be zero");
  if (width == 0 || height == 0) throw MalformedHeaderError("zero raster dimension");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw MalformedHeaderError("invalid cell_size");
  const std::uint64_t cells = std::uint64_t{width} * height;
  if (cells > kMaxCells) throw DimensionOverflowError("raster dimensions exceed 2^31 cells");

  const std::size_t header_size = bytes.size() - header.remaining();
  detail::ByteReader<TruncatedPayloadError> payload(bytes.data() + header_size, header.remaining());
  payload.need(cells * 4, "payload");
  if (payload.remaining() != cells * 4) throw MalformedHeaderError("trailing bytes after payload");

  Grid g;
  g.values.resize(height, width);
  g.cell_size = cell_size;
  g.origin = Point2(ox, oy);
  g.nodata = nodata;
  payload.f32_array(g.values.data(), cells, "payload");
  return g;
}

void write_grid(const Grid& grid, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), serialize_grid(grid));
}

Grid read_grid(const std::filesystem::path& path) {
  return deserialize_grid(detail::read_file_bytes(path.string()));
}

Grid downsample_2x(const Grid& grid) {
  if (grid.width() % 2 != 0 || grid.height() % 2 != 0)
    throw InvalidArgument("downsample_2x requires even dimensions");
  Grid out;
  out.values.resize(grid.height() / 2, grid.width() / 2);
  out.cell_size = grid.cell_size * 2.0;
  out.origin = grid.origin;
  out.nodata = grid.nodata;
  for (Eigen::Index r = 0; r < out.height(); ++r) {
    for (Eigen::Index c = 0; c < out.width(); ++c) {
      const float a = grid(2 * r, 2 * c), b = grid(2 * r, 2 * c + 1);
      const float d = grid(2 * r + 1, 2 * c), e = grid(2 * r + 1, 2 * c + 1);
      if (a == grid.nodata || b == grid.nodata || d == grid.nodata || e == grid.nodata) {
        out(r, c) = grid.nodata;
      } else {
        // Sum in double: the mean of four floats is then correctly rounded.
        out(r, c) = static_cast<float>((static_cast<double>(a) + b + d + e) * 0.25);
      }
    }
  }
  return out;
}

Grid crop(const Grid& grid, Eigen::Index row0, Eigen::Index col0, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1 || row0 < 0 || col0 < 0 || row0 + rows > grid.height() || col0 + cols > grid.width())
    throw OutOfBoundsError("crop window outside grid");
  Grid out;
  out.values = grid.values.block(row0, col0, rows, cols);
  out.cell_size = grid.cell_size;
  out.origin = grid.origin + Point2(static_cast<double>(col0), static_cast<double>(row0)) * grid.cell_size;
  out.nodata = grid.nodata;
  return out;
}

Grid flip(const Grid& grid, bool horizontal, bool vertical) {
  Grid out = grid;
  out.values = flip_matrix(grid.values, horizontal, vertical);
  return out;
}

}  // namespace hydrofix
