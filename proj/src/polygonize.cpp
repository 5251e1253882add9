#include "hydrofix/polygonize.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "hydrofix/error.hpp"

namespace hydrofix {

namespace {

struct Lattice {
  const Grid& P;
  double threshold;
  Eigen::Index rows, cols;  // padded dims

  explicit Lattice(const Grid& grid, double t) : P(grid), threshold(t), rows(grid.height() + 2), cols(grid.width() + 2) {}

  bool pad(Eigen::Index r, Eigen::Index c) const { return r == 0 || c == 0 || r == rows - 1 || c == cols - 1; }
  double value(Eigen::Index r, Eigen::Index c) const { return P(r - 1, c - 1); }
  bool inside(Eigen::Index r, Eigen::Index c) const { return !pad(r, c) && value(r, c) > threshold; }

  // Edge ids: horizontal edge (r,c)-(r,c+1) -> 2*(r*cols+c), vertical edge
  // (r,c)-(r+1,c) -> 2*(r*cols+c)+1.
  long h_edge(Eigen::Index r, Eigen::Index c) const { return 2 * static_cast<long>(r * cols + c); }
  long v_edge(Eigen::Index r, Eigen::Index c) const { return 2 * static_cast<long>(r * cols + c) + 1; }

  Point2 crossing(long edge) const {
    const long cell = edge / 2;
    const Eigen::Index r = cell / cols, c = cell % cols;
    const Eigen::Index r2 = (edge % 2 == 0) ? r : r + 1;
    const Eigen::Index c2 = (edge % 2 == 0) ? c + 1 : c;
    double t = 0.5;
    if (!pad(r, c) && !pad(r2, c2)) {
      const double a = value(r, c), b = value(r2, c2);
      t = (threshold - a) / (b - a);
    }
    const double lr = static_cast<double>(r) + t * static_cast<double>(r2 - r);
    const double lc = static_cast<double>(c) + t * static_cast<double>(c2 - c);
    // Lattice (r, c) is the center of raster cell (r-1, c-1).
    return P.origin + Point2(lc - 0.5, lr - 0.5) * P.cell_size;
  }
};

struct SquareEdge {
  long id;
  bool from_inside;
  bool to_inside;
};

double saddle_center(const Lattice& L, Eigen::Index r, Eigen::Index c) {
  if (L.pad(r, c) || L.pad(r, c + 1) || L.pad(r + 1, c) || L.pad(r + 1, c + 1)) return -INFINITY;
  return 0.25 * (L.value(r, c) + L.value(r, c + 1) + L.value(r + 1, c) + L.value(r + 1, c + 1));
}

}  // namespace

ContourRings contour_rings(const Grid& P, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("contour threshold must lie in (0,1)");
  const Lattice L(P, threshold);
  std::unordered_map<long, long> next;
  std::vector<long> starts;

  for (Eigen::Index r = 0; r + 1 < L.rows; ++r) {
    for (Eigen::Index c = 0; c + 1 < L.cols; ++c) {
      const bool bl = L.inside(r, c), br = L.inside(r, c + 1), tr = L.inside(r + 1, c + 1), tl = L.inside(r + 1, c);
      if (bl == br && br == tr && tr == tl) continue;
      // Counterclockwise: bottom, right, top, left.
      const SquareEdge edges[4] = {{L.h_edge(r, c), bl, br},
                                   {L.v_edge(r, c + 1), br, tr},
                                   {L.h_edge(r + 1, c), tr, tl},
                                   {L.v_edge(r, c), tl, bl}};
      int idx[4];
      int n = 0;
      for (int e = 0; e < 4; ++e)
        if (edges[e].from_inside != edges[e].to_inside) idx[n++] = e;
      auto link = [&](int exit_slot, int entry_slot) {
        const long from = edges[idx[exit_slot]].id, to = edges[idx[entry_slot]].id;
        next.emplace(from, to);
        starts.push_back(from);
      };
      // Crossings alternate exit/entry in counterclockwise order.
      const bool joined = n == 2 || saddle_center(L, r, c) > threshold;
      for (int s = 0; s < n; ++s) {
        if (!edges[idx[s]].from_inside) continue;
        link(s, joined ? (s + 1) % n : (s + n - 1) % n);
      }
    }
  }

  ContourRings out;
  std::unordered_map<long, bool> visited;
  for (long start : starts) {
    if (visited[start]) continue;
    Polygon ring;
    long e = start;
    while (!visited[e]) {
      visited[e] = true;
      const Point2 p = L.crossing(e);
      if (ring.empty() || (ring.back() - p).squaredNorm() > 0.0) ring.push_back(p);
      e = next.at(e);
    }
    if (ring.size() > 1 && (ring.front() - ring.back()).squaredNorm() == 0.0) ring.pop_back();
    if (ring.size() < 3) continue;
    if (signed_area(ring) > 0) {
      out.outers.push_back(std::move(ring));
    } else {
      out.holes.push_back(std::move(ring));
    }
  }
  return out;
}

std::vector<Polygon> contours(const Grid& P, double threshold) { return contour_rings(P, threshold).outers; }

const char* to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::Proposed: return "proposed";
    case CandidateStatus::Filtered: return "filtered";
    case CandidateStatus::Accepted: return "accepted";
    case CandidateStatus::Rejected: return "rejected";
  }
  return "proposed";
}

CandidateStatus candidate_status_from_string(const std::string& s) {
  if (s == "proposed") return CandidateStatus::Proposed;
  if (s == "filtered") return CandidateStatus::Filtered;
  if (s == "accepted") return CandidateStatus::Accepted;
  if (s == "rejected") return CandidateStatus::Rejected;
  throw InvalidArgument("unknown candidate status: " + s);
}

namespace {

struct CellRange {
  Eigen::Index r0, r1, c0, c1;
};

CellRange polygon_cells(const Polygon& poly, const Grid& g) {
  Point2 lo = poly.front(), hi = poly.front();
  for (const auto& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Point2 clo = g.world_to_cell(lo), chi = g.world_to_cell(hi);
  return {std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(clo.y()))),
          std::min<Eigen::Index>(g.height() - 1, static_cast<Eigen::Index>(std::ceil(chi.y()))),
          std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(clo.x()))),
          std::min<Eigen::Index>(g.width() - 1, static_cast<Eigen::Index>(std::ceil(chi.x())))};
}

}  // namespace

CandidateStats candidate_stats(const Polygon& polygon, const Grid& P, const Grid& dem) {
  if (!same_georeference(P, dem)) throw ShapeMismatchError("candidate_stats: P and dem are not aligned");
  if (polygon.size() < 3) throw DegenerateError("candidate polygon has fewer than 3 vertices");
  const CellRange range = polygon_cells(polygon, P);
  std::vector<float> probs;
  double sum = 0.0, sum2 = 0.0;
  std::size_t valid = 0;
  for (Eigen::Index r = range.r0; r <= range.r1; ++r) {
    for (Eigen::Index c = range.c0; c <= range.c1; ++c) {
      if (!point_in_polygon(P.cell_center(r, c), polygon)) continue;
      probs.push_back(P(r, c));
      if (dem.is_nodata(r, c)) continue;
      sum += dem(r, c);
      ++valid;
    }
  }
  if (probs.empty()) throw DegenerateError("polygon encloses no cell centers");
  // Two-pass variance around the mean for accuracy.
  const double mean = valid > 0 ? sum / static_cast<double>(valid) : 0.0;
  for (Eigen::Index r = range.r0; r <= range.r1; ++r)
    for (Eigen::Index c = range.c0; c <= range.c1; ++c)
      if (!dem.is_nodata(r, c) && point_in_polygon(P.cell_center(r, c), polygon)) {
        const double d = dem(r, c) - mean;
        sum2 += d * d;
      }
  CandidateStats s;
  s.cells = probs.size();
  s.area_m2 = static_cast<double>(probs.size()) * P.cell_size * P.cell_size;
  s.elev_var = valid > 0 ? sum2 / static_cast<double>(valid) : 0.0;
  const std::size_t mid = (probs.size() - 1) / 2;
  std::nth_element(probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(mid), probs.end());
  s.median_p = probs[mid];
  return s;
}

void FilterConfig::validate() const {
  if (!(threshold_lo > 0 && threshold_lo < threshold && threshold < 1))
    throw InvalidArgument("filter thresholds must satisfy 0 < T_lo < T < 1");
  if (!(min_area_m2 < max_area_m2)) throw InvalidArgument("min area must be below max area");
}

void filter_candidates(std::vector<Candidate>& candidates, const FilterConfig& cfg) {
  for (auto& c : candidates) {
    c.reason.clear();
    if (c.area_m2 < cfg.min_area_m2) {
      c.reason = "too_small";
    } else if (c.area_m2 > cfg.max_area_m2) {
      c.reason = "too_large";
    } else if (c.elev_var < cfg.min_elev_var) {
      c.reason = "flat";
    } else if (c.median_p < cfg.min_median_p) {
      c.reason = "low_median";
    }
    c.status = c.reason.empty() ? CandidateStatus::Proposed : CandidateStatus::Filtered;
  }
}

double GmmFit::density(const Eigen::Vector2d& p) const {
  double total = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const Eigen::Vector2d d = p - means[j];
    const double det = covariances[j].determinant();
    total += weights[j] * std::exp(-0.5 * d.dot(covariances[j].inverse() * d)) / (2.0 * std::numbers::pi * std::sqrt(det));
  }
  return total;
}

GmmFit gmm_em(const std::vector<Eigen::Vector2d>& input, int k, double tol, int max_iter) {
  if (k < 1) throw InvalidArgument("gmm_em: k must be >= 1");
  std::vector<Eigen::Vector2d> pts = input;
  auto lex = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  };
  std::sort(pts.begin(), pts.end(), lex);
  std::size_t distinct = pts.empty() ? 0 : 1;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i] != pts[i - 1]) ++distinct;
  if (distinct < static_cast<std::size_t>(k) || distinct < 2) throw DegenerateError("gmm_em: not enough distinct points");

  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::Matrix2Xd X(2, n);
  for (Eigen::Index i = 0; i < n; ++i) X.col(i) = pts[static_cast<std::size_t>(i)];
  const Eigen::Vector2d mean = X.rowwise().mean();
  const Eigen::Matrix2Xd centered = X.colwise() - mean;
  const Eigen::Matrix2d cov = centered * centered.transpose() / static_cast<double>(n);
  const double scale2 = std::max(cov.trace() / 2.0, std::numeric_limits<double>::min());
  const Eigen::Matrix2d ridge = 1e-6 * scale2 * Eigen::Matrix2d::Identity();

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d axis = eig.eigenvectors().col(1);
  std::vector<Eigen::Index> by_proj(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) by_proj[static_cast<std::size_t>(i)] = i;
  const Eigen::VectorXd proj = (centered.transpose() * axis);
  std::stable_sort(by_proj.begin(), by_proj.end(), [&](Eigen::Index a, Eigen::Index b) { return proj[a] < proj[b]; });

  GmmFit fit;
  for (int j = 0; j < k; ++j) {
    const std::size_t rank =
        k == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(j) * static_cast<double>(n - 1) / (k - 1)));
    fit.means.push_back(k == 1 ? mean : Eigen::Vector2d(X.col(by_proj[rank])));
    fit.covariances.push_back(cov + ridge);
    fit.weights.push_back(1.0 / k);
  }

  Eigen::MatrixXd resp(k, n);
  auto e_step = [&]() {
    double ll = 0.0;
    std::vector<Eigen::Matrix2d> inv(static_cast<std::size_t>(k));
    std::vector<double> log_norm(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      const auto& S = fit.covariances[static_cast<std::size_t>(j)];
      inv[static_cast<std::size_t>(j)] = S.inverse();
      log_norm[static_cast<std::size_t>(j)] = std::log(fit.weights[static_cast<std::size_t>(j)]) -
                                              std::log(2.0 * std::numbers::pi) - 0.5 * std::log(S.determinant());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -INFINITY;
      for (int j = 0; j < k; ++j) {
        const Eigen::Vector2d d = X.col(i) - fit.means[static_cast<std::size_t>(j)];
        resp(j, i) = log_norm[static_cast<std::size_t>(j)] - 0.5 * d.dot(inv[static_cast<std::size_t>(j)] * d);
        mx = std::max(mx, resp(j, i));
      }
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += std::exp(resp(j, i) - mx);
      const double lse = mx + std::log(s);
      ll += lse;
      for (int j = 0; j < k; ++j) resp(j, i) = std::exp(resp(j, i) - lse);
    }
    return ll;
  };

  fit.log_likelihood.push_back(e_step());
  for (int it = 0; it < max_iter; ++it) {
    for (int j = 0; j < k; ++j) {
      const double nj = resp.row(j).sum();
      if (nj < 1e-12) continue;
      const auto J = static_cast<std::size_t>(j);
      fit.means[J] = (X * resp.row(j).transpose()) / nj;
      const Eigen::Matrix2Xd d = X.colwise() - fit.means[J];
      fit.covariances[J] = (d * resp.row(j).asDiagonal() * d.transpose()) / nj + ridge;
      fit.weights[J] = nj / static_cast<double>(n);
    }
    const double ll = e_step();
    ++fit.iterations;
    const double gain = ll - fit.log_likelihood.back();
    fit.log_likelihood.push_back(ll);
    if (gain < tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

Correction fit_horseshoe(const Candidate& candidate, const Grid& P, const Grid& dem, const HorseshoeConfig& cfg,
                         Rng& rng) {
  if (!same_georeference(P, dem)) throw ShapeMismatchError("fit_horseshoe: P and dem are not aligned");
  if (candidate.polygon.size() < 3) throw FitFailedError("candidate polygon is degenerate");

  // (1) Re-contour a local window at the lower threshold.
  CellRange range = polygon_cells(candidate.polygon, P);
  const Eigen::Index m = cfg.context_cells;
  range.r0 = std::max<Eigen::Index>(0, range.r0 - m);
  range.c0 = std::max<Eigen::Index>(0, range.c0 - m);
  range.r1 = std::min<Eigen::Index>(P.height() - 1, range.r1 + m);
  range.c1 = std::min<Eigen::Index>(P.width() - 1, range.c1 + m);
  const Grid local = crop(P, range.r0, range.c0, range.r1 - range.r0 + 1, range.c1 - range.c0 + 1);
  const Point2 anchor = candidate.centroid();
  Polygon expanded = candidate.polygon;
  for (auto& ring : contours(local, cfg.threshold_lo)) {
    if (point_in_polygon(anchor, ring) || point_in_polygon(candidate.polygon.front(), ring)) {
      expanded = std::move(ring);
      break;
    }
  }

  // (2)-(3) Cells of the crop inside the expanded polygon, weighted so the
  // lowest heights are the most probable.
  const CellRange crop_range = polygon_cells(expanded, dem);
  std::vector<Point2> cells;
  std::vector<double> heights;
  for (Eigen::Index r = crop_range.r0; r <= crop_range.r1; ++r) {
    for (Eigen::Index c = crop_range.c0; c <= crop_range.c1; ++c) {
      const Point2 q = dem.cell_center(r, c);
      if (dem.is_nodata(r, c) || !point_in_polygon(q, expanded)) continue;
      cells.push_back(q);
      heights.push_back(dem(r, c));
    }
  }
  if (cells.size() < 4) throw FitFailedError("too few cells to fit a horseshoe");
  const double max_h = *std::max_element(heights.begin(), heights.end());
  std::vector<double> cdf(cells.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    acc += std::max(0.0, max_h - heights[i]);
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw FitFailedError("flat crop, no depressions to fit");

  // (4) Sample cell centers.
  std::vector<Eigen::Vector2d> samples;
  samples.reserve(static_cast<std::size_t>(cfg.samples));
  for (int s = 0; s < cfg.samples; ++s) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    samples.push_back(cells[static_cast<std::size_t>(it - cdf.begin())]);
  }

  // (5)-(6) Two depressions and the spine between them.
  GmmFit fit;
  try {
    fit = gmm_em(samples, 2);
  } catch (const DegenerateError& e) {
    throw FitFailedError(std::string("degenerate GMM: ") + e.what());
  }
  const Point2 mu1 = fit.means[0], mu2 = fit.means[1];
  if ((mu2 - mu1).norm() < dem.cell_size) throw FitFailedError("mixture components collapsed");
  const Point2 mid = 0.5 * (mu1 + mu2);
  if (fit.density(mid) > cfg.max_midpoint_ratio * std::min(fit.density(mu1), fit.density(mu2)))
    throw FitFailedError("no separating ridge between the mixture components");
  if (!point_in_polygon(mu1, expanded) || !point_in_polygon(mu2, expanded))
    throw FitFailedError("spine endpoint outside the expanded polygon");

  // (7) Width across the spine from the original contour.
  const Point2 u = (mu2 - mu1).normalized();
  const Point2 normal(-u.y(), u.x());
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& p : candidate.polygon) {
    const double t = p.dot(normal);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (!(hi - lo > 0.0)) throw FitFailedError("zero-width horseshoe");
  return Correction::horseshoe(candidate.id, mu1, mu2, hi - lo);
}

std::vector<Candidate> extract_candidates(const Grid& P, const Grid& dem, const FilterConfig& cfg, std::uint64_t seed,
                                          int horseshoe_samples) {
  cfg.validate();
  if (!same_georeference(P, dem)) throw ShapeMismatchError("extract_candidates: P and dem are not aligned");
  std::vector<Candidate> out;
  const std::vector<Polygon> polys = contours(P, cfg.threshold);
  for (std::size_t i = 0; i < polys.size(); ++i) {
    Candidate c;
    c.id = "c" + std::to_string(i);
    c.polygon = polys[i];
    try {
      const CandidateStats s = candidate_stats(c.polygon, P, dem);
      c.area_m2 = s.area_m2;
      c.elev_var = s.elev_var;
      c.median_p = s.median_p;
    } catch (const DegenerateError&) {
      continue;
    }
    out.push_back(std::move(c));
  }
  filter_candidates(out, cfg);
  const HorseshoeConfig hcfg{cfg.threshold_lo, horseshoe_samples};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].status != CandidateStatus::Proposed) continue;
    Rng rng(derive_seed(seed, i));
    try {
      out[i].horseshoe = fit_horseshoe(out[i], P, dem, hcfg, rng);
    } catch (const FitFailedError&) {
      out[i].horseshoe.reset();
    }
  }
  return out;
}

}  // namespace hydrofix
