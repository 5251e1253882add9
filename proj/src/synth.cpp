#include "hydrofix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "hydrofix/error.hpp"
#include "hydrofix/rng.hpp"

namespace hydrofix {

namespace {

constexpr int kMaxLayoutAttempts = 200;
constexpr double kPolylineStep = 2.0;

struct Bump {
  double amplitude, kx, ky, phase;
};

struct Layout {
  std::vector<Polyline> rivers, roads;
  std::vector<Crossing> crossings;
  std::vector<Point2> river_dir;  // per crossing
  std::vector<Point2> road_dir;
};

// A feature that runs along `axis` (0 = x, 1 = y) across the whole region,
// sampled every kPolylineStep meters along the axis.
Polyline make_feature(Rng& rng, const SynthParams& p, int index, int count, int axis, bool meander) {
  const double along_len = axis == 0 ? p.width * p.cell_size : p.height * p.cell_size;
  const double across_len = axis == 0 ? p.height * p.cell_size : p.width * p.cell_size;
  const double slot = across_len / count;
  const double c0 = slot * (index + 0.5 + rng.uniform(-0.25, 0.25));
  const double slope = std::tan(rng.uniform(-1.0, 1.0) * p.max_angle_deg * std::numbers::pi / 180.0);
  const double amp = meander ? rng.uniform(0.0, p.meander_amplitude) : 0.0;
  const double wavelength = rng.uniform(80.0, 200.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Polyline line;
  const int n = static_cast<int>(std::ceil(along_len / kPolylineStep));
  for (int i = 0; i <= n; ++i) {
    const double t = std::min(along_len, i * kPolylineStep);
    const double across =
        c0 + slope * (t - 0.5 * along_len) + amp * std::sin(2.0 * std::numbers::pi * t / wavelength + phase);
    line.push_back(axis == 0 ? Point2(t, across) : Point2(across, t));
  }
  return line;
}

double min_distance_between(const Polyline& a, const Polyline& b) {
  double best = INFINITY;
  for (const auto& p : a) best = std::min(best, point_polyline_distance(p, b));
  return best;
}

bool inside_across(const Polyline& line, int axis, double lo, double hi) {
  for (const auto& p : line) {
    const double v = axis == 0 ? p.y() : p.x();
    if (v < lo || v > hi) return false;
  }
  return true;
}

std::optional<Layout> try_layout(Rng& rng, const SynthParams& p) {
  const int river_axis = rng.coin() ? 0 : 1;
  const int road_axis = 1 - river_axis;
  const double w = p.width * p.cell_size, h = p.height * p.cell_size;
  const double across_river = river_axis == 0 ? h : w;
  const double across_road = road_axis == 0 ? h : w;

  Layout layout;
  for (int i = 0; i < p.rivers; ++i) {
    layout.rivers.push_back(make_feature(rng, p, i, p.rivers, river_axis, true));
    if (!inside_across(layout.rivers.back(), river_axis, p.edge_margin, across_river - p.edge_margin))
      return std::nullopt;
  }
  for (int j = 0; j < p.roads; ++j) {
    layout.roads.push_back(make_feature(rng, p, j, p.roads, road_axis, false));
    if (!inside_across(layout.roads.back(), road_axis, p.edge_margin, across_road - p.edge_margin))
      return std::nullopt;
  }
  for (std::size_t i = 0; i < layout.rivers.size(); ++i)
    for (std::size_t j = i + 1; j < layout.rivers.size(); ++j)
      if (min_distance_between(layout.rivers[i], layout.rivers[j]) < p.feature_spacing) return std::nullopt;
  for (std::size_t i = 0; i < layout.roads.size(); ++i)
    for (std::size_t j = i + 1; j < layout.roads.size(); ++j)
      if (min_distance_between(layout.roads[i], layout.roads[j]) < p.feature_spacing) return std::nullopt;

  for (int i = 0; i < p.rivers; ++i) {
    for (int j = 0; j < p.roads; ++j) {
      const Polyline& river = layout.rivers[i];
      const Polyline& road = layout.roads[j];
      int hits = 0;
      for (std::size_t a = 0; a + 1 < river.size(); ++a) {
        for (std::size_t b = 0; b + 1 < road.size(); ++b) {
          auto x = segment_intersection(river[a], river[a + 1], road[b], road[b + 1]);
          if (!x) continue;
          // A crossing exactly on a shared vertex is reported by two segments.
          if (hits > 0 && (layout.crossings.back().location - *x).norm() < 1e-9) continue;
          ++hits;
          layout.crossings.push_back({*x, i, j});
          layout.river_dir.push_back((river[a + 1] - river[a]).normalized());
          layout.road_dir.push_back((road[b + 1] - road[b]).normalized());
        }
      }
      if (hits != 1) return std::nullopt;
    }
  }
  for (const auto& c : layout.crossings) {
    const Point2& q = c.location;
    if (q.x() < p.edge_margin || q.y() < p.edge_margin || q.x() > w - p.edge_margin || q.y() > h - p.edge_margin)
      return std::nullopt;
  }
  for (std::size_t a = 0; a < layout.crossings.size(); ++a)
    for (std::size_t b = a + 1; b < layout.crossings.size(); ++b)
      if ((layout.crossings[a].location - layout.crossings[b].location).norm() < p.crossing_spacing)
        return std::nullopt;
  return layout;
}

// Minimum distance from every cell center to the given polylines, limited to
// `reach` meters (cells further away keep +inf).
RasterD distance_field(const std::vector<Polyline>& lines, const Grid& g, double reach) {
  RasterD dist = RasterD::Constant(g.height(), g.width(), INFINITY);
  for (const auto& line : lines) {
    for (std::size_t s = 0; s + 1 < line.size(); ++s) {
      const Point2& a = line[s];
      const Point2& b = line[s + 1];
      const Point2 lo = a.cwiseMin(b) - Point2::Constant(reach);
      const Point2 hi = a.cwiseMax(b) + Point2::Constant(reach);
      const Point2 clo = g.world_to_cell(lo), chi = g.world_to_cell(hi);
      const Eigen::Index c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(clo.x())));
      const Eigen::Index r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(clo.y())));
      const Eigen::Index c1 = std::min<Eigen::Index>(g.width() - 1, static_cast<Eigen::Index>(std::ceil(chi.x())));
      const Eigen::Index r1 = std::min<Eigen::Index>(g.height() - 1, static_cast<Eigen::Index>(std::ceil(chi.y())));
      for (Eigen::Index r = r0; r <= r1; ++r)
        for (Eigen::Index c = c0; c <= c1; ++c)
          dist(r, c) = std::min(dist(r, c), point_segment_distance(g.cell_center(r, c), a, b));
    }
  }
  return dist;
}

struct Decoy {
  Point2 center, axis;
  double strength;
};

std::vector<Decoy> place_decoys(const SynthParams& p, const Layout& layout) {
  Rng rng(derive_seed(p.seed, 0x6465636f79ULL));
  const double w = p.width * p.cell_size, h = p.height * p.cell_size;
  const double margin = p.edge_margin + p.decoy_half_length;
  std::vector<Decoy> out;
  if (w <= 2 * margin || h <= 2 * margin) return out;
  for (int k = 0; k < p.decoys; ++k) {
    for (int attempt = 0; attempt < kMaxLayoutAttempts; ++attempt) {
      const Point2 c(rng.uniform(margin, w - margin), rng.uniform(margin, h - margin));
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double strength = rng.uniform(p.decoy_min_strength, 1.0);
      const double clearance = p.decoy_half_length + 2.0 * p.valley_half_width;
      bool ok = true;
      for (const auto& l : layout.rivers) ok = ok && point_polyline_distance(c, l) >= clearance;
      for (const auto& l : layout.roads) ok = ok && point_polyline_distance(c, l) >= clearance;
      for (const auto& x : layout.crossings) ok = ok && (x.location - c).norm() >= p.crossing_spacing;
      for (const auto& d : out) ok = ok && (d.center - c).norm() >= p.crossing_spacing;
      if (!ok) continue;
      out.push_back({c, Point2(std::cos(theta), std::sin(theta)), strength});
      break;
    }
  }
  return out;
}

}  // namespace

void SynthParams::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("synth: region must be at least 1x1 cells");
  if (!(cell_size > 0)) throw InvalidArgument("synth: cell_size must be positive");
  if (rivers < 0 || roads < 0 || bumps < 0) throw InvalidArgument("synth: counts must be >= 0");
  if (!(embankment_height > 0) || !(valley_depth > 0)) throw InvalidArgument("synth: heights must be positive");
  if (culvert_probability < 0 || culvert_probability > 1)
    throw InvalidArgument("synth: culvert_probability must be in [0,1]");
  if (noise_amplitude < 0 || bump_amplitude < 0) throw InvalidArgument("synth: amplitudes must be >= 0");
  if (!(channel_half_width > 0) || valley_half_width <= channel_half_width)
    throw InvalidArgument("synth: valley must be wider than its channel");
  if (!(road_half_width > 0) || !(shoulder_width > 0)) throw InvalidArgument("synth: road widths must be positive");
  if (decoys < 0 || !(decoy_half_length > 0) || decoy_min_strength < 0 || decoy_min_strength > 1)
    throw InvalidArgument("synth: bad decoy parameters");
}

SynthResult synth_terrain(const SynthParams& p) {
  p.validate();
  Rng rng(p.seed);
  SynthResult out;
  out.dem = Grid(p.height, p.width, p.cell_size);

  std::vector<Bump> bumps;
  for (int k = 0; k < p.bumps; ++k) {
    const double amplitude = p.bump_amplitude * rng.uniform(0.5, 1.0) / std::sqrt(static_cast<double>(p.bumps));
    const double wavelength = rng.uniform(60.0, 300.0);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double kk = 2.0 * std::numbers::pi / wavelength;
    bumps.push_back({amplitude, kk * std::cos(theta), kk * std::sin(theta), rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }

  Layout layout;
  if (p.rivers > 0 || p.roads > 0) {
    const double w = p.width * p.cell_size, h = p.height * p.cell_size;
    if (w < 2 * p.edge_margin || h < 2 * p.edge_margin)
      throw PlacementError("synth: region too small for the edge margin");
    bool placed = false;
    for (int attempt = 0; attempt < kMaxLayoutAttempts && !placed; ++attempt) {
      if (auto l = try_layout(rng, p)) {
        layout = std::move(*l);
        placed = true;
      }
    }
    if (!placed) throw PlacementError("synth: region too small to place the requested rivers and roads");
  }

  const double footprint = p.road_half_width + p.shoulder_width;
  const std::vector<Decoy> decoys = place_decoys(p, layout);
  const double berm_half = p.valley_half_width + footprint;
  const RasterD river_dist = distance_field(layout.rivers, out.dem, p.valley_half_width);
  const RasterD road_dist = distance_field(layout.roads, out.dem, footprint);

  for (Eigen::Index r = 0; r < out.dem.height(); ++r) {
    for (Eigen::Index c = 0; c < out.dem.width(); ++c) {
      const Point2 q = out.dem.cell_center(r, c);
      double base = 20.0;
      for (const auto& b : bumps) base += b.amplitude * std::cos(b.kx * q.x() + b.ky * q.y() + b.phase);

      double terrain = base;
      const double dr = river_dist(r, c);
      if (dr <= p.channel_half_width) {
        terrain -= p.valley_depth;
      } else if (dr < p.valley_half_width) {
        const double t = (dr - p.channel_half_width) / (p.valley_half_width - p.channel_half_width);
        terrain -= p.valley_depth * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
      }
      const double dd = road_dist(r, c);
      if (dd <= p.road_half_width) {
        terrain = std::max(terrain, base + p.embankment_height);
      } else if (dd < footprint) {
        terrain = std::max(terrain, base + p.embankment_height * (1.0 - (dd - p.road_half_width) / p.shoulder_width));
      }
      for (const auto& d : decoys) {
        if ((q - d.center).norm() > p.decoy_half_length + berm_half) continue;
        const Point2 n(-d.axis.y(), d.axis.x());
        const double dv = point_segment_distance(q, d.center - d.axis * p.decoy_half_length,
                                                 d.center + d.axis * p.decoy_half_length);
        if (dv <= p.channel_half_width) {
          terrain -= d.strength * p.valley_depth;
        } else if (dv < p.valley_half_width) {
          const double t = (dv - p.channel_half_width) / (p.valley_half_width - p.channel_half_width);
          terrain -= d.strength * p.valley_depth * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        }
        const double db = point_segment_distance(q, d.center - n * berm_half, d.center + n * berm_half);
        const double top = base + d.strength * p.embankment_height;
        if (db <= p.road_half_width) {
          terrain = std::max(terrain, top);
        } else if (db < footprint) {
          terrain = std::max(terrain, base + d.strength * p.embankment_height *
                                                 (1.0 - (db - p.road_half_width) / p.shoulder_width));
        }
      }
      out.dem(r, c) = static_cast<float>(terrain);
    }
  }
  if (p.noise_amplitude > 0) {
    Rng noise(derive_seed(p.seed, 0x6e6f697365ULL));
    for (Eigen::Index i = 0; i < out.dem.size(); ++i)
      out.dem.values.data()[i] += static_cast<float>(noise.uniform(-1.0, 1.0) * p.noise_amplitude);
  }

  for (std::size_t k = 0; k < layout.crossings.size(); ++k) {
    const bool culvert = rng.uniform() < p.culvert_probability;
    if (!culvert) continue;
    const Point2& x = layout.crossings[k].location;
    const Point2& u = layout.river_dir[k];
    const double s = std::abs(cross2(u, layout.road_dir[k]));
    const double half_len = footprint / std::max(s, 0.2) + 1.0;
    char id[32];
    std::snprintf(id, sizeof id, "x%03zu", k);
    out.truths.push_back(Correction::horseshoe(id, x - u * half_len, x + u * half_len, 2.0 * p.channel_half_width));
  }
  out.rivers = std::move(layout.rivers);
  out.roads = std::move(layout.roads);
  out.crossings = std::move(layout.crossings);
  for (const auto& d : decoys) out.decoys.push_back(d.center);
  return out;
}

}  // namespace hydrofix
