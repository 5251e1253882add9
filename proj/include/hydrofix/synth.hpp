#pragma once

#include <cstdint>
#include <vector>

#include "hydrofix/correction.hpp"
#include "hydrofix/raster.hpp"

namespace hydrofix {

/// Parameters of the synthetic terrain generator. Lengths in meters unless
/// noted.
struct SynthParams {
  int width = 512;   ///< cells
  int height = 512;  ///< cells
  double cell_size = 0.8;
  int rivers = 3;
  int roads = 3;
  double embankment_height = 1.5;
  double valley_depth = 2.0;
  double culvert_probability = 1.0;
  double noise_amplitude = 0.05;
  std::uint64_t seed = 1;

  int bumps = 12;               ///< cosine bumps in the base field
  double bump_amplitude = 1.5;  ///< total amplitude budget of the base field
  double channel_half_width = 3.0;
  double valley_half_width = 15.0;
  double road_half_width = 4.0;  ///< flat road top
  double shoulder_width = 4.0;   ///< embankment slope run on each side
  double max_angle_deg = 6.0;    ///< deviation of features from their axis
  double meander_amplitude = 6.0;
  double edge_margin = 25.0;      ///< crossings keep this far from the border
  double crossing_spacing = 60.0; ///< minimum distance between crossings
  double feature_spacing = 40.0;  ///< minimum distance between parallel features

  /// Dry look-alikes: a closed depression dammed by a short berm, away from
  /// rivers and roads, with no truth. Strength scales depth and berm height.
  int decoys = 0;
  double decoy_half_length = 16.0;
  double decoy_min_strength = 0.3;

  void validate() const;
};

struct Crossing {
  Point2 location;
  int river = 0;
  int road = 0;
};

struct SynthResult {
  Grid dem;
  std::vector<Polyline> rivers;
  std::vector<Polyline> roads;
  std::vector<Correction> truths;
  std::vector<Crossing> crossings;  ///< every river/road crossing, with or without a truth
  std::vector<Point2> decoys;       ///< centers of the decoys that could be placed
};

/// Deterministic desk-scale terrain: cosine-bump base field, carved river
/// valleys, raised road embankments that dam the valleys, and a HorseShoe
/// truth spanning the embankment at (a seeded subset of) the crossings.
SynthResult synth_terrain(const SynthParams& params);

}  // namespace hydrofix
