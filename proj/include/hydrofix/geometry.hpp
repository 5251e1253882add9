#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace hydrofix {

using Point2 = Eigen::Vector2d;
using Polyline = std::vector<Point2>;
/// Closed ring; the closing edge back to front() is implicit.
using Polygon = std::vector<Point2>;

inline double cross2(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const Point2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline double point_polyline_distance(const Point2& p, const Polyline& line) {
  if (line.empty()) return INFINITY;
  if (line.size() == 1) return (p - line.front()).norm();
  double best = INFINITY;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
  return best;
}

/// Proper or touching intersection of segments ab and cd.
inline std::optional<Point2> segment_intersection(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const Point2 r = b - a, s = d - c;
  const double denom = cross2(r, s);
  if (denom == 0.0) return std::nullopt;
  const double t = cross2(c - a, s) / denom;
  const double u = cross2(c - a, r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return a + t * r;
}

/// Signed shoelace area; positive for counterclockwise rings.
inline double signed_area(const Polygon& poly) {
  double acc = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) acc += cross2(poly[i], poly[(i + 1) % n]);
  return 0.5 * acc;
}

/// Area centroid; falls back to the vertex mean for degenerate rings.
inline Point2 polygon_centroid(const Polygon& poly) {
  if (poly.empty()) return Point2::Zero();
  const double a = signed_area(poly);
  if (std::abs(a) < 1e-12) {
    Point2 m = Point2::Zero();
    for (const auto& p : poly) m += p;
    return m / static_cast<double>(poly.size());
  }
  Point2 c = Point2::Zero();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % n];
    c += (p + q) * cross2(p, q);
  }
  return c / (6.0 * a);
}

/// Even-odd ray casting.
inline bool point_in_polygon(const Point2& p, const Polygon& poly) {
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

/// Rectangle built around a spine segment: the spine runs along the long
/// axis through the middle and the rectangle extends half_width to each side.
struct OrientedRect {
  Point2 a, b;
  double half_width = 0.0;

  bool contains(const Point2& p) const {
    const Point2 axis = b - a;
    const double len = axis.norm();
    if (len == 0.0) return false;
    const Point2 u = axis / len;
    const Point2 d = p - a;
    const double along = d.dot(u);
    const double across = std::abs(cross2(u, d));
    return along >= 0.0 && along <= len && across <= half_width;
  }

  Polygon corners() const {
    const Point2 u = (b - a).normalized();
    const Point2 n(-u.y(), u.x());
    return {a - n * half_width, b - n * half_width, b + n * half_width, a + n * half_width};
  }
};

}  // namespace hydrofix
