#include "hydrofix/hydro.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "hydrofix/error.hpp"

namespace hydrofix {

namespace {

// E, N, W, S, NE, NW, SW, SE with rows increasing northward.
constexpr int kDr[8] = {0, 1, 0, -1, 1, 1, -1, -1};
constexpr int kDc[8] = {1, 0, -1, 0, 1, -1, -1, 1};

}  // namespace

void FeatureStack::add(std::string name, Grid layer) {
  names.push_back(std::move(name));
  layers.push_back(std::move(layer));
}

void FeatureStack::validate() const {
  if (layers.empty()) throw InvalidArgument("feature stack needs at least one layer");
  if (names.size() != layers.size()) throw InvalidArgument("feature stack names/layers size mismatch");
  for (const auto& l : layers)
    if (!same_georeference(l, layers.front())) throw ShapeMismatchError("feature layers are not aligned");
}

Grid flow_accumulation(const Grid& dem) {
  const Eigen::Index rows = dem.height(), cols = dem.width();
  const Eigen::Index n = dem.size();
  Grid acc = dem.like(0.0f);
  acc.nodata = dem.nodata;
  std::vector<double> units(static_cast<std::size_t>(n), 0.0);
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(n));
  const float* h = dem.values.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (h[i] == dem.nodata) continue;
    units[static_cast<std::size_t>(i)] = 1.0;
    order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [h](Eigen::Index a, Eigen::Index b) {
    return h[a] != h[b] ? h[a] > h[b] : a < b;
  });
  for (Eigen::Index i : order) {
    const Eigen::Index r = i / cols, c = i % cols;
    Eigen::Index target = -1;
    float lowest = h[i];
    for (int k = 0; k < 8; ++k) {
      const Eigen::Index rr = r + kDr[k], cc = c + kDc[k];
      if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
      const Eigen::Index j = rr * cols + cc;
      if (h[j] == dem.nodata) continue;
      if (h[j] < lowest) {
        lowest = h[j];
        target = j;
      }
    }
    if (target >= 0) units[static_cast<std::size_t>(target)] += units[static_cast<std::size_t>(i)];
  }
  for (Eigen::Index i = 0; i < n; ++i) acc.values.data()[i] = static_cast<float>(units[static_cast<std::size_t>(i)]);
  return acc;
}

Grid fill_depressions(const Grid& dem) {
  const Eigen::Index rows = dem.height(), cols = dem.width();
  Grid out = dem;
  std::vector<char> closed(static_cast<std::size_t>(dem.size()), 0);
  using Entry = std::pair<float, Eigen::Index>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  auto is_edge = [&](Eigen::Index r, Eigen::Index c) {
    if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) return true;
    for (int k = 0; k < 8; ++k)
      if (dem(r + kDr[k], c + kDc[k]) == dem.nodata) return true;
    return false;
  };
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index i = r * cols + c;
      if (dem(r, c) == dem.nodata) {
        closed[static_cast<std::size_t>(i)] = 1;
      } else if (is_edge(r, c)) {
        closed[static_cast<std::size_t>(i)] = 1;
        open.emplace(dem(r, c), i);
      }
    }
  }
  while (!open.empty()) {
    const auto [level, i] = open.top();
    open.pop();
    const Eigen::Index r = i / cols, c = i % cols;
    for (int k = 0; k < 8; ++k) {
      const Eigen::Index rr = r + kDr[k], cc = c + kDc[k];
      if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
      const Eigen::Index j = rr * cols + cc;
      if (closed[static_cast<std::size_t>(j)]) continue;
      closed[static_cast<std::size_t>(j)] = 1;
      out(rr, cc) = std::max(out(rr, cc), level);
      open.emplace(out(rr, cc), j);
    }
  }
  return out;
}

Grid depression_depth(const Grid& dem) {
  Grid filled = fill_depressions(dem);
  for (Eigen::Index i = 0; i < dem.size(); ++i) {
    float& f = filled.values.data()[i];
    const float d = dem.values.data()[i];
    f = d == dem.nodata ? 0.0f : f - d;
  }
  return filled;
}

Grid rasterize_polylines(const std::vector<Polyline>& lines, const Grid& templ, double half_width) {
  if (half_width < 0) throw InvalidArgument("rasterize_polylines: half_width must be >= 0");
  Grid out = templ.like(0.0f);
  for (const auto& line : lines) {
    for (std::size_t s = 0; s < line.size(); ++s) {
      const Point2& a = line[s];
      const Point2& b = s + 1 < line.size() ? line[s + 1] : line[s];
      if (s + 1 == line.size() && line.size() > 1) break;
      const Point2 lo = out.world_to_cell(a.cwiseMin(b) - Point2::Constant(half_width));
      const Point2 hi = out.world_to_cell(a.cwiseMax(b) + Point2::Constant(half_width));
      const Eigen::Index c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(lo.x())));
      const Eigen::Index r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(lo.y())));
      const Eigen::Index c1 = std::min<Eigen::Index>(out.width() - 1, static_cast<Eigen::Index>(std::ceil(hi.x())));
      const Eigen::Index r1 = std::min<Eigen::Index>(out.height() - 1, static_cast<Eigen::Index>(std::ceil(hi.y())));
      for (Eigen::Index r = r0; r <= r1; ++r)
        for (Eigen::Index c = c0; c <= c1; ++c)
          if (point_segment_distance(out.cell_center(r, c), a, b) <= half_width) out(r, c) = 1.0f;
    }
  }
  return out;
}

FeatureStack build_features(const Grid& dem, const std::vector<Polyline>& rivers,
                            const std::vector<Polyline>& roads, const FeatureOptions& options) {
  FeatureStack stack;
  stack.add("elevation", dem);
  if (options.flow) {
    Grid acc = flow_accumulation(dem);
    for (Eigen::Index i = 0; i < acc.size(); ++i) acc.values.data()[i] = std::log1p(acc.values.data()[i]);
    stack.add("flow", std::move(acc));
  }
  if (options.fill) stack.add("fill", depression_depth(dem));
  if (options.vectors) {
    stack.add("rivers", rasterize_polylines(rivers, dem, options.vector_half_width));
    stack.add("roads", rasterize_polylines(roads, dem, options.vector_half_width));
  }
  return stack;
}

}  // namespace hydrofix
