#pragma once

// Independent reference implementations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "hydrofix/evaluate.hpp"
#include "hydrofix/labels.hpp"
#include "hydrofix/mosaic.hpp"
#include "hydrofix/rng.hpp"
#include "hydrofix/segnet/model.hpp"

namespace oracle {

using namespace hydrofix;

/// Zero-padded 3x3 correlation written out cell by cell.
inline RasterD dense_conv3(const RasterD& x, const double k[3][3]) {
  RasterD out = RasterD::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double acc = 0.0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const Eigen::Index rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= x.rows() || cc >= x.cols()) continue;
          acc += k[dr + 1][dc + 1] * x(rr, cc);
        }
      out(r, c) = acc;
    }
  return out;
}

inline constexpr double kEdgeKernel[3][3] = {
    {-0.125, -0.125, -0.125}, {-0.125, 1.0, -0.125}, {-0.125, -0.125, -0.125}};
inline constexpr double kBoxKernel[3][3] = {
    {1 / 9.0, 1 / 9.0, 1 / 9.0}, {1 / 9.0, 1 / 9.0, 1 / 9.0}, {1 / 9.0, 1 / 9.0, 1 / 9.0}};

/// Rectangular blobs with ids 1..n; later blobs overwrite earlier ones.
inline LabelMask random_label(Rng& rng, int h, int w, int max_blobs = 4) {
  LabelMask m{Grid(h, w, 1.0), IdRaster::Zero(h, w)};
  const int blobs = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_blobs + 1)));
  for (int b = 1; b <= blobs; ++b) {
    const auto r0 = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(h)));
    const auto c0 = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(w)));
    const auto rh = static_cast<Eigen::Index>(1 + rng.below(4));
    const auto cw = static_cast<Eigen::Index>(1 + rng.below(6));
    for (Eigen::Index r = r0; r < std::min<Eigen::Index>(h, r0 + rh); ++r)
      for (Eigen::Index c = c0; c < std::min<Eigen::Index>(w, c0 + cw); ++c) {
        m.mask(r, c) = 1.0f;
        m.ids(r, c) = b;
      }
  }
  return m;
}

/// Weight map recomputed from the definition with dense convolutions.
inline RasterD weight_oracle(const LabelMask& m) {
  const Eigen::Index h = m.ids.rows(), w = m.ids.cols();
  std::map<int, int> counts;
  for (Eigen::Index i = 0; i < m.ids.size(); ++i)
    if (m.ids.data()[i]) ++counts[m.ids.data()[i]];
  RasterD L = RasterD::Zero(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      if (m.ids(r, c)) L(r, c) = 1.0 / counts[m.ids(r, c)];
  const RasterD E = dense_conv3(L, kEdgeKernel);
  const RasterD B = dense_conv3(E, kBoxKernel);
  return (L + E + B).array() + 1.0 / std::sqrt(static_cast<double>(w * h));
}

/// Random tile for gradient checks: smooth-ish elevation plus a label blob.
inline DatasetTile random_tile(Rng& rng, int side, int channels) {
  DatasetTile t;
  for (int ch = 0; ch < channels; ++ch) {
    Grid g(side, side, 1.0);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.values.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    t.features.add(ch == 0 ? "elevation" : "layer" + std::to_string(ch), g);
  }
  t.label = random_label(rng, side, side, 2);
  t.weight = weight_map(t.label);
  return t;
}

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t kinked = 0;  ///< elements whose +-h evaluations straddle a ReLU kink
  double max_tensor_rel = 0.0;  ///< max over tensors of ||a - n|| / max(||n||, floor)
  std::string worst_tensor;
};

/// Sign pattern of every recorded node over a batch; two parameter points
/// with equal patterns lie in the same linear region of every ReLU.
template <typename Scalar>
std::vector<bool> activation_pattern(const segnet::ParamMap<Scalar>& params, const segnet::ModelArch& arch,
                                     const std::vector<DatasetTile>& batch) {
  std::vector<bool> out;
  for (const DatasetTile& tile : batch) {
    segnet::Tape<Scalar> tape(params, nullptr);
    segnet::build_network(tape, arch, segnet::input_matrix<Scalar>(tile.features),
                          static_cast<int>(tile.features.height()), static_cast<int>(tile.features.width()));
    for (std::size_t id = 0; id < tape.size(); ++id) {
      const auto& v = tape.node(static_cast<int>(id)).value;
      for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v.data()[i] > Scalar(0));
    }
  }
  return out;
}

/// Central differences of the batch loss against backward(), for every
/// element of every parameter tensor. Relative error is
/// |a - n| / max(|a|, |n|, floor). With skip_kinks set, elements whose +h
/// and -h points differ in activation pattern are counted in `kinked` and
/// left out of max_rel.
template <typename Scalar>
GradReport gradient_check(const segnet::ModelArch& arch, const std::vector<DatasetTile>& batch,
                          segnet::ParamMap<Scalar> params, double h, double floor, bool skip_kinks = false) {
  const auto gamma = static_cast<Scalar>(arch.gamma);
  const segnet::BatchGradient<Scalar> g = segnet::backward<Scalar>(params, arch, batch, gamma);
  GradReport rep;
  for (auto& [name, t] : params) {
    const auto& ga = g.grads.at(name);
    double diff2 = 0.0, num2 = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const Scalar orig = t.data[i];
      t.data[i] = static_cast<Scalar>(orig + h);
      const double up = static_cast<double>(segnet::batch_loss<Scalar>(params, arch, batch, gamma));
      std::vector<bool> pat_up;
      if (skip_kinks) pat_up = activation_pattern(params, arch, batch);
      t.data[i] = static_cast<Scalar>(orig - h);
      const double dn = static_cast<double>(segnet::batch_loss<Scalar>(params, arch, batch, gamma));
      const bool kink = skip_kinks && activation_pattern(params, arch, batch) != pat_up;
      t.data[i] = orig;
      ++rep.checked;
      if (kink) {
        ++rep.kinked;
        continue;
      }
      const double num = (up - dn) / (2.0 * h);
      const double ana = static_cast<double>(ga.data[i]);
      diff2 += (ana - num) * (ana - num);
      num2 += num * num;
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(ana) + " numeric " +
                    std::to_string(num);
      }
    }
    const double trel = std::sqrt(diff2) / std::max(std::sqrt(num2), floor);
    if (trel > rep.max_tensor_rel) {
      rep.max_tensor_rel = trel;
      rep.worst_tensor = name;
    }
  }
  return rep;
}

/// Per-cell weighted average over every covering tile, accumulated cell by
/// cell from the window formula.
inline RasterD mosaic_oracle(const FeatureStack& region, int s, const TilePredictor& predictor) {
  const int tile = 2 * s;
  const int h = static_cast<int>(region.height()), w = static_cast<int>(region.width());
  auto offsets = [&](int extent) {
    std::vector<int> o;
    for (int v = 0; v + tile <= extent; v += s) o.push_back(v);
    if (o.back() + tile != extent) o.push_back(extent - tile);
    return o;
  };
  auto hw = [&](int i) {
    const double v = std::sin(M_PI * (i + 0.5) / (2.0 * s));
    return v * v;
  };
  RasterD num = RasterD::Zero(h, w), den = RasterD::Zero(h, w);
  for (int r0 : offsets(h))
    for (int c0 : offsets(w)) {
      const FeatureStack t = region.map([&](const Grid& g) { return crop(g, r0, c0, tile, tile); });
      const RasterF x = predictor(t);
      for (int r = 0; r < tile; ++r)
        for (int c = 0; c < tile; ++c) {
          const double wgt = hw(r) * hw(c);
          num(r0 + r, c0 + c) += wgt * x(r, c);
          den(r0 + r, c0 + c) += wgt;
        }
    }
  return num.array() / den.array();
}

/// Maximum-cardinality matching with minimum total distance among pairs
/// closer than `radius`, found by exhaustive search. Returns
/// (matched count, total distance).
inline std::pair<int, double> exhaustive_matching(const std::vector<Point2>& props, const std::vector<Point2>& truths,
                                                  double radius) {
  std::vector<bool> used(truths.size(), false);
  std::pair<int, double> best{0, 0.0};
  auto rec = [&](auto&& self, std::size_t i, int count, double total) -> void {
    if (count > best.first || (count == best.first && total < best.second)) best = {count, total};
    if (i == props.size()) return;
    const int remaining = static_cast<int>(props.size() - i);
    if (count + remaining < best.first) return;
    self(self, i + 1, count, total);
    for (std::size_t j = 0; j < truths.size(); ++j) {
      if (used[j]) continue;
      const double d = (props[i] - truths[j]).norm();
      if (d >= radius) continue;
      used[j] = true;
      self(self, i + 1, count + 1, total + d);
      used[j] = false;
    }
  };
  rec(rec, 0, 0, 0.0);
  return best;
}

}  // namespace oracle
