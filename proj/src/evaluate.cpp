#include "hydrofix/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "hydrofix/error.hpp"

namespace hydrofix {

double auc_exact(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeMismatchError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedAucError("AUC needs both positive and negative cells");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

double auc_histogram(std::span<const float> scores, std::span<const std::uint8_t> labels, int bins) {
  if (scores.size() != labels.size()) throw ShapeMismatchError("auc: scores and labels differ in length");
  if (bins < 1) throw InvalidArgument("auc_histogram: bins must be positive");
  std::vector<double> pos(static_cast<std::size_t>(bins)), neg(static_cast<std::size_t>(bins));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(static_cast<double>(scores[i]), 0.0, 1.0);
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(s * bins), static_cast<std::size_t>(bins) - 1);
    (labels[i] ? pos : neg)[b] += 1.0;
  }
  const double np = std::accumulate(pos.begin(), pos.end(), 0.0);
  const double nn = std::accumulate(neg.begin(), neg.end(), 0.0);
  if (np == 0 || nn == 0) throw UndefinedAucError("AUC needs both positive and negative cells");
  double below = 0.0, acc = 0.0;
  for (std::size_t b = 0; b < pos.size(); ++b) {
    acc += pos[b] * (below + 0.5 * neg[b]);
    below += neg[b];
  }
  return acc / (np * nn);
}

double tile_auc(std::span<const Grid> predictions, std::span<const LabelMask> labels, bool histogram) {
  if (predictions.size() != labels.size()) throw ShapeMismatchError("tile_auc: list lengths differ");
  std::vector<float> scores;
  std::vector<std::uint8_t> truth;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const Grid& p = predictions[t];
    const Grid& l = labels[t].mask;
    if (p.height() != l.height() || p.width() != l.width()) throw ShapeMismatchError("tile_auc: tile shapes differ");
    for (Eigen::Index r = 0; r < p.height(); ++r)
      for (Eigen::Index c = 0; c < p.width(); ++c) {
        if (p.is_nodata(r, c)) continue;
        scores.push_back(p(r, c));
        truth.push_back(l(r, c) > 0.5f ? 1 : 0);
      }
  }
  return histogram ? auc_histogram(scores, truth) : auc_exact(scores, truth);
}

bool MatchResult::is_matched_proposal(std::size_t i) const {
  return std::any_of(pairs.begin(), pairs.end(), [i](const MatchPair& p) { return p.proposal == i; });
}

MatchResult match_points(const std::vector<Point2>& proposals, const std::vector<Point2>& truths, double radius_m) {
  if (!(radius_m > 0)) throw InvalidArgument("match radius must be positive");
  std::vector<MatchPair> edges;
  for (std::size_t i = 0; i < proposals.size(); ++i)
    for (std::size_t j = 0; j < truths.size(); ++j) {
      const double d = (proposals[i] - truths[j]).norm();
      if (d < radius_m) edges.push_back({i, j, d});
    }
  std::sort(edges.begin(), edges.end(), [](const MatchPair& a, const MatchPair& b) {
    return std::tie(a.distance, a.proposal, a.truth) < std::tie(b.distance, b.proposal, b.truth);
  });
  std::vector<bool> used_p(proposals.size()), used_t(truths.size());
  MatchResult out;
  for (const auto& e : edges) {
    if (used_p[e.proposal] || used_t[e.truth]) continue;
    used_p[e.proposal] = used_t[e.truth] = true;
    out.pairs.push_back(e);
  }
  for (std::size_t i = 0; i < proposals.size(); ++i)
    if (!used_p[i]) out.unmatched_proposals.push_back(i);
  for (std::size_t j = 0; j < truths.size(); ++j)
    if (!used_t[j]) out.unmatched_truths.push_back(j);
  return out;
}

MatchResult match_detections(const std::vector<Candidate>& proposals, const std::vector<Correction>& truths,
                             double radius_m) {
  std::vector<Point2> p, t;
  p.reserve(proposals.size());
  t.reserve(truths.size());
  for (const auto& c : proposals) p.push_back(c.centroid());
  for (const auto& c : truths) t.push_back(c.centroid());
  return match_points(p, t, radius_m);
}

std::vector<Candidate> proposals_at(const std::vector<Candidate>& proposals, double t) {
  std::vector<Candidate> kept;
  for (const auto& c : proposals)
    if (c.median_p >= t) kept.push_back(c);
  return kept;
}

double mean_precision(const std::vector<PRPoint>& points, MpFormula formula) {
  double prev_recall = 0.0, mp = 0.0;
  for (auto it = points.rbegin(); it != points.rend(); ++it) {
    const double dr = it->recall - prev_recall;
    if (formula == MpFormula::AveragePrecision) {
      mp += dr * it->precision;
    } else if (dr != 0.0) {
      mp += dr / it->precision;
    }
    prev_recall = it->recall;
  }
  return mp;
}

PRCurve pr_curve(const std::vector<Candidate>& proposals, const std::vector<Correction>& truths, double radius_m,
                 MpFormula formula) {
  return pr_curve(std::vector<RegionDetections>{{proposals, truths}}, radius_m, formula);
}

PRCurve pr_curve(const std::vector<RegionDetections>& regions, double radius_m, MpFormula formula) {
  PRCurve curve;
  std::vector<double> thresholds;
  std::size_t n_truth = 0, n_proposals = 0;
  for (const auto& r : regions) {
    for (const auto& c : r.proposals) thresholds.push_back(c.median_p);
    n_truth += r.truths.size();
    n_proposals += r.proposals.size();
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  auto counts = [&](double t) {
    std::size_t tp = 0, fp = 0;
    for (const auto& r : regions) {
      const MatchResult m = match_detections(proposals_at(r.proposals, t), r.truths, radius_m);
      tp += m.tp();
      fp += m.fp();
    }
    return std::pair{tp, fp};
  };
  const double nt = static_cast<double>(n_truth);
  for (double t : thresholds) {
    const auto [tp, fp] = counts(t);
    curve.points.push_back({t, static_cast<double>(tp) / static_cast<double>(tp + fp),
                            n_truth > 0 ? static_cast<double>(tp) / nt : 0.0, tp, fp});
  }
  if (n_proposals > 0 && n_truth > 0) curve.max_recall = static_cast<double>(counts(-INFINITY).first) / nt;
  curve.mP = mean_precision(curve.points, formula);
  return curve;
}

std::vector<Point2> bootstrap_sample(const std::vector<Candidate>& candidates, const MatchResult& match,
                                     const BootstrapRange& range) {
  std::vector<Point2> out;
  for (std::size_t i : match.unmatched_proposals) {
    if (i >= candidates.size()) throw OutOfBoundsError("bootstrap_sample: match does not belong to candidates");
    if (range.contains(candidates[i].median_p)) out.push_back(candidates[i].centroid());
  }
  return out;
}

EvalReport evaluate(const std::vector<Candidate>& proposals, const std::vector<Correction>& truths, double radius_m,
                    double threshold) {
  return evaluate(std::vector<RegionDetections>{{proposals, truths}}, radius_m, threshold);
}

EvalReport evaluate(const std::vector<RegionDetections>& regions, double radius_m, double threshold) {
  EvalReport r;
  const PRCurve curve = pr_curve(regions, radius_m);
  r.curve = curve.points;
  r.mP = curve.mP;
  r.max_recall = curve.max_recall;
  r.threshold = threshold;
  for (const auto& reg : regions) {
    const MatchResult m = match_detections(proposals_at(reg.proposals, threshold), reg.truths, radius_m);
    r.tp += m.tp();
    r.fp += m.fp();
    r.fn += m.fn();
  }
  return r;
}

}  // namespace hydrofix
