#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hydrofix/correction.hpp"
#include "hydrofix/geometry.hpp"
#include "hydrofix/raster.hpp"
#include "hydrofix/rng.hpp"

namespace hydrofix {

// ---------------------------------------------------------------------------
// Contours

struct ContourRings {
  std::vector<Polygon> outers;  ///< counterclockwise, P > T on the left
  std::vector<Polygon> holes;   ///< clockwise
};

/// Marching squares over cell centers at level T with linear interpolation.
/// The raster is padded with an outside ring so every ring closes; a ring
/// leaving the raster runs along its outer edge. Saddles use the average of
/// the four corners: above T joins the inside corners.
ContourRings contour_rings(const Grid& P, double threshold);

/// Outer boundaries only, in world coordinates.
std::vector<Polygon> contours(const Grid& P, double threshold);

// ---------------------------------------------------------------------------
// Candidates

enum class CandidateStatus { Proposed, Filtered, Accepted, Rejected };

const char* to_string(CandidateStatus s);
CandidateStatus candidate_status_from_string(const std::string& s);

struct CandidateStats {
  double area_m2 = 0;
  double elev_var = 0;
  double median_p = 0;
  std::size_t cells = 0;
};

struct Candidate {
  std::string id;
  Polygon polygon;
  double area_m2 = 0;
  double elev_var = 0;
  double median_p = 0;
  std::optional<Correction> horseshoe;
  CandidateStatus status = CandidateStatus::Proposed;
  std::string reason;  ///< filter reason when status is Filtered

  Point2 centroid() const { return polygon_centroid(polygon); }
};

/// Statistics over the cells whose centers lie inside the polygon. Throws
/// DegenerateError when no cell center is enclosed.
CandidateStats candidate_stats(const Polygon& polygon, const Grid& P, const Grid& dem);

struct FilterConfig {
  double min_area_m2 = 2.0;
  double max_area_m2 = 1e4;
  double min_elev_var = 0.01;
  double min_median_p = 0.0;  ///< the precision/recall knob
  double threshold = 0.4;     ///< contour level T
  double threshold_lo = 0.25; ///< expanded level for horseshoe context

  void validate() const;
};

/// Sets each candidate to Proposed or Filtered(reason) from its stats alone.
/// Reasons are checked in the order too_small, too_large, flat, low_median.
void filter_candidates(std::vector<Candidate>& candidates, const FilterConfig& cfg);

// ---------------------------------------------------------------------------
// Gaussian mixtures

struct GmmFit {
  std::vector<double> weights;
  std::vector<Eigen::Vector2d> means;
  std::vector<Eigen::Matrix2d> covariances;
  std::vector<double> log_likelihood;  ///< after each iteration (index 0 = initial)
  int iterations = 0;
  bool converged = false;

  /// Mixture density at p.
  double density(const Eigen::Vector2d& p) const;
};

/// EM with full covariances. Initial means sit at points spread evenly along
/// the principal axis (for k = 2 the two extreme projections). Input order
/// does not affect the result. Throws DegenerateError with fewer than k
/// distinct points.
GmmFit gmm_em(const std::vector<Eigen::Vector2d>& points, int k = 2, double tol = 1e-6, int max_iter = 200);

struct HorseshoeConfig {
  double threshold_lo = 0.25;
  int samples = 2000;
  int context_cells = 16;  ///< margin around the candidate when re-contouring
  /// Midpoint-to-mean mixture density ratio above which the two components
  /// are considered one depression.
  double max_midpoint_ratio = 0.5;
};

/// Expand the candidate at the lower threshold, turn the enclosed DEM crop
/// into a sampling distribution favouring low cells, fit a 2-component GMM
/// and build a HorseShoe along mu1 -> mu2 whose width spans the candidate
/// polygon. Throws FitFailedError when the fit is degenerate.
Correction fit_horseshoe(const Candidate& candidate, const Grid& P, const Grid& dem, const HorseshoeConfig& cfg,
                         Rng& rng);

/// Contours, stats, filtering and horseshoe fitting for a whole map.
/// Candidate ids are "c<index>" in contour order; each candidate gets its
/// own rng stream derived from seed.
std::vector<Candidate> extract_candidates(const Grid& P, const Grid& dem, const FilterConfig& cfg, std::uint64_t seed,
                                          int horseshoe_samples = 2000);

}  // namespace hydrofix
