#pragma once

#include <string>
#include <vector>

#include "hydrofix/geometry.hpp"

namespace hydrofix {

enum class CorrectionKind { Line, HorseShoe };

/// A hydrological correction. For a HorseShoe, (p0, p1) is the spine through
/// the middle of the rectangle and width is the full extent across it.
struct Correction {
  std::string id;
  CorrectionKind kind = CorrectionKind::Line;
  Point2 p0 = Point2::Zero();
  Point2 p1 = Point2::Zero();
  double width = 0.0;

  static Correction line(std::string id, Point2 a, Point2 b) {
    return {std::move(id), CorrectionKind::Line, std::move(a), std::move(b), 0.0};
  }
  static Correction horseshoe(std::string id, Point2 a, Point2 b, double w) {
    return {std::move(id), CorrectionKind::HorseShoe, std::move(a), std::move(b), w};
  }

  /// Segment midpoint for a Line, rectangle center for a HorseShoe.
  Point2 centroid() const { return 0.5 * (p0 + p1); }
  double length() const { return (p1 - p0).norm(); }

  /// Throws InvalidArgument when p0 == p1, or a HorseShoe has width <= 0.
  void validate() const;
};

const char* to_string(CorrectionKind kind);

}  // namespace hydrofix
