#include <doctest.h>

#include <cmath>

#include "hydrofix/error.hpp"
#include "hydrofix/mosaic.hpp"
#include "oracles.hpp"

using namespace hydrofix;

namespace {

/// Raw window sum at every cell of an (n*s) x (n*s) field covered by
/// placements at every multiple of s, including ones hanging off the edge.
RasterD raw_window_sum(int s, int n) {
  const RasterD H = window_2d(s);
  const int side = n * s;
  RasterD sum = RasterD::Zero(side, side);
  for (int r0 = -s; r0 < side; r0 += s)
    for (int c0 = -s; c0 < side; c0 += s)
      for (int r = 0; r < 2 * s; ++r)
        for (int c = 0; c < 2 * s; ++c) {
          const int rr = r0 + r, cc = c0 + c;
          if (rr >= 0 && cc >= 0 && rr < side && cc < side) sum(rr, cc) += H(r, c);
        }
  return sum;
}

FeatureStack random_region(std::uint64_t seed, int rows, int cols) {
  Rng rng(seed);
  Grid g(rows, cols, 1.6, Point2(100, 200));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.values.data()[i] = static_cast<float>(rng.uniform(0, 10));
  FeatureStack f;
  f.add("elevation", g);
  return f;
}

}  // namespace

TEST_CASE("window partition of unity") {
  for (int s : {4, 8, 16, 32}) {
    CAPTURE(s);
    const Eigen::VectorXd h = window_1d(s);
    for (int i = 0; i < s; ++i) CHECK(std::abs(h[i] + h[i + s] - 1.0) < 1e-12);
    const RasterD sum = raw_window_sum(s, 4);
    CHECK((sum.array() - 1.0).abs().maxCoeff() < 1e-6);
    const RasterD H = window_2d(s);
    CHECK(H.rows() == 2 * s);
    CHECK((H - h * h.transpose()).cwiseAbs().maxCoeff() == 0.0);
    if (s >= 8) {
      CHECK(H(s, s) >= 0.9);
      CHECK(H(s - 1, s) >= 0.9);
      CHECK(H(0, 0) <= 0.1);
      CHECK(H(2 * s - 1, 2 * s - 1) <= 0.1);
      CHECK(H(0, 2 * s - 1) <= 0.1);
    }
    // Monotone from the edge to the center.
    for (int i = 1; i < s; ++i) CHECK(h[i] > h[i - 1]);
  }
}

TEST_CASE("window values for s = 2") {
  const Eigen::VectorXd h = window_1d(2);
  REQUIRE(h.size() == 4);
  CHECK(h[0] == doctest::Approx(0.1464466).epsilon(1e-6));
  CHECK(h[1] == doctest::Approx(0.8535534).epsilon(1e-6));
  CHECK(h[2] == doctest::Approx(0.8535534).epsilon(1e-6));
  CHECK(h[3] == doctest::Approx(0.1464466).epsilon(1e-6));
  CHECK_THROWS_AS(window_1d(1), InvalidArgument);
}

TEST_CASE("tile offsets") {
  CHECK(tile_offsets(64, 32) == std::vector<int>{0});
  CHECK(tile_offsets(96, 32) == std::vector<int>{0, 32});
  CHECK(tile_offsets(100, 32) == std::vector<int>{0, 32, 36});
  CHECK(tile_offsets(128, 32) == std::vector<int>{0, 32, 64});
  CHECK_THROWS_AS(tile_offsets(63, 32), InvalidArgument);
}

TEST_CASE("predict_region matches the brute-force oracle") {
  segnet::ModelArch arch;
  arch.depth = 2;
  arch.base_channels = 2;
  auto params = segnet::init_params<float>(arch, 6);
  segnet::randomize_params(params, 6, 0.4);
  const TilePredictor model = [&](const FeatureStack& t) { return segnet::forward(params, arch, t).values; };
  for (int s : {4, 8}) {
    for (auto [rows, cols] : {std::pair{3 * s, 3 * s}, std::pair{3 * s + 3, 2 * s + 5}}) {
      CAPTURE(s);
      CAPTURE(rows);
      const FeatureStack region = random_region(static_cast<std::uint64_t>(s * 100 + rows), rows, cols);
      const MosaicConfig cfg{s};
      const Grid p = predict_region(region, cfg, model);
      const RasterD expect = oracle::mosaic_oracle(region, s, model);
      CHECK((p.values.cast<double>() - expect).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(p.origin == region.elevation().origin);
      CHECK(p.cell_size == region.elevation().cell_size);
      CHECK(p.values.minCoeff() >= 0.0f);
      CHECK(p.values.maxCoeff() <= 1.0f);
      const Grid q = predict_region(region, cfg, model, TileSchedule::ColumnMajor);
      CHECK(q.values == p.values);
    }
  }
}

TEST_CASE("predict_region special cases") {
  const FeatureStack region = random_region(1, 80, 72);
  const MosaicConfig cfg{16};
  const Grid c = predict_region(region, cfg, [](const FeatureStack& t) {
    return RasterF::Constant(t.height(), t.width(), 0.5f);
  });
  CHECK((c.values.array() - 0.5f).abs().maxCoeff() < 1e-7f);

  const FeatureStack one = random_region(2, 32, 32);
  const auto ramp = [](const FeatureStack& t) {
    RasterF x(t.height(), t.width());
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(i) / static_cast<float>(x.size());
    return x;
  };
  const Grid single = predict_region(one, cfg, ramp);
  CHECK((single.values - ramp(one)).cwiseAbs().maxCoeff() < 1e-6f);

  CHECK_THROWS_AS(predict_region(random_region(3, 31, 40), cfg, ramp), InvalidArgument);
  CHECK_THROWS_AS(predict_region(one, cfg, [](const FeatureStack&) { return RasterF::Zero(4, 4); }),
                  ShapeMismatchError);
  segnet::ModelArch arch;
  const auto params = segnet::init_params<float>(arch, 1);
  CHECK_THROWS_AS(predict_region(params, arch, one, MosaicConfig{6}), InvalidArgument);
  const Grid zero_init = predict_region(params, arch, random_region(4, 64, 96), MosaicConfig{16});
  CHECK((zero_init.values.array() == 0.5f).all());
}
