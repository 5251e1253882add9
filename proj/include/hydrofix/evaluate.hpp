#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydrofix/correction.hpp"
#include "hydrofix/labels.hpp"
#include "hydrofix/polygonize.hpp"

namespace hydrofix {

// ---------------------------------------------------------------------------
// Tile AUC

/// Exact ROC AUC by sorting with midrank ties. Throws UndefinedAucError when
/// only one class is present.
double auc_exact(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// Approximation on `bins` equal-width score bins over [0, 1].
double auc_histogram(std::span<const float> scores, std::span<const std::uint8_t> labels, int bins = 4096);

/// AUC over all cells pooled across tiles. Nodata prediction cells are skipped.
double tile_auc(std::span<const Grid> predictions, std::span<const LabelMask> labels, bool histogram = false);

// ---------------------------------------------------------------------------
// Matching

inline constexpr double kDefaultMatchRadius = 25.0;

struct MatchPair {
  std::size_t proposal;  ///< index into the proposal list
  std::size_t truth;     ///< index into the truth list
  double distance;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_proposals;
  std::vector<std::size_t> unmatched_truths;

  std::size_t tp() const { return pairs.size(); }
  std::size_t fp() const { return unmatched_proposals.size(); }
  std::size_t fn() const { return unmatched_truths.size(); }
  bool is_matched_proposal(std::size_t i) const;
};

/// Greedy one-to-one matching over pairs closer than radius, in increasing
/// distance order (ties by proposal index, then truth index).
MatchResult match_points(const std::vector<Point2>& proposals, const std::vector<Point2>& truths, double radius_m);

/// Candidates are matched by polygon centroid, truths by geometry centroid.
MatchResult match_detections(const std::vector<Candidate>& proposals, const std::vector<Correction>& truths,
                             double radius_m = kDefaultMatchRadius);

// ---------------------------------------------------------------------------
// Precision / recall

struct PRPoint {
  double threshold;
  double precision;
  double recall;
  std::size_t tp, fp;
};

enum class MpFormula {
  AveragePrecision,  ///< sum (R_n - R_{n-1}) * P_n
  Literal,           ///< sum (R_n - R_{n-1}) / P_n
};

struct PRCurve {
  std::vector<PRPoint> points;  ///< ascending threshold
  double mP = 0.0;
  double max_recall = 0.0;
};

/// One point per distinct candidate median probability.
PRCurve pr_curve(const std::vector<Candidate>& proposals, const std::vector<Correction>& truths,
                 double radius_m = kDefaultMatchRadius, MpFormula formula = MpFormula::AveragePrecision);

/// Proposals and truths of one region. Matching never crosses regions.
struct RegionDetections {
  std::vector<Candidate> proposals;
  std::vector<Correction> truths;
};

/// Pooled curve: thresholds from all regions, counts summed over regions.
PRCurve pr_curve(const std::vector<RegionDetections>& regions, double radius_m = kDefaultMatchRadius,
                 MpFormula formula = MpFormula::AveragePrecision);

/// mP of an existing curve, walked from the highest threshold down.
double mean_precision(const std::vector<PRPoint>& points, MpFormula formula);

/// Proposals whose median probability is at least t.
std::vector<Candidate> proposals_at(const std::vector<Candidate>& proposals, double t);

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapRange {
  double lo = 0.435;
  double hi = 0.45;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Centroids of false-positive candidates (unmatched in `match`, which must
/// have been computed over the same candidate list) whose median lies in the
/// closed range.
std::vector<Point2> bootstrap_sample(const std::vector<Candidate>& candidates, const MatchResult& match,
                                     const BootstrapRange& range = {});

// ---------------------------------------------------------------------------
// Report

struct EvalReport {
  std::optional<double> auc;
  double max_recall = 0.0;
  double mP = 0.0;
  std::vector<PRPoint> curve;
  std::size_t tp = 0, fp = 0, fn = 0;
  double threshold = 0.5;  ///< where tp/fp/fn are counted
};

EvalReport evaluate(const std::vector<Candidate>& proposals, const std::vector<Correction>& truths,
                    double radius_m = kDefaultMatchRadius, double threshold = 0.5);
EvalReport evaluate(const std::vector<RegionDetections>& regions, double radius_m = kDefaultMatchRadius,
                    double threshold = 0.5);

}  // namespace hydrofix
