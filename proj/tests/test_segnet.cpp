#include <doctest.h>

#include <cmath>

#include "hydrofix/error.hpp"
#include "hydrofix/segnet/checkpoint.hpp"
#include "hydrofix/segnet/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hydrofix;
using namespace hydrofix::segnet;

namespace {

ModelArch tiny_arch(int channels) {
  ModelArch s;
  s.depth = 1;
  s.base_channels = 2;
  s.input_channels = channels;
  s.gamma = 2.0f;
  return s;
}

std::vector<DatasetTile> tiles(std::uint64_t seed, int n, int side, int channels) {
  Rng rng(seed);
  std::vector<DatasetTile> out;
  for (int i = 0; i < n; ++i) out.push_back(oracle::random_tile(rng, side, channels));
  return out;
}

}  // namespace

TEST_CASE("backward matches central differences in double precision") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const ModelArch arch = tiny_arch(1 + static_cast<int>(seed % 2));
    const auto batch = tiles(derive_seed(77, seed), 2, 8, arch.input_channels);
    ParamMap<float> p = init_params<float>(arch, seed);
    randomize_params(p, seed, 0.5);
    const oracle::GradReport r = oracle::gradient_check<double>(arch, batch, cast_params<double>(p), 1e-5, 1e-6);
    INFO(r.worst);
    CHECK(r.max_rel < 1e-5);
    CHECK(r.kinked == 0);
  }
}

TEST_CASE("backward matches central differences in single precision") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const ModelArch arch = tiny_arch(1 + static_cast<int>(seed % 2));
    const auto batch = tiles(derive_seed(77, seed), 2, 8, arch.input_channels);
    ParamMap<float> p = init_params<float>(arch, seed);
    randomize_params(p, seed, 0.5);
    const oracle::GradReport r = oracle::gradient_check<float>(arch, batch, p, 1e-3, 1e-3, true);
    INFO(r.worst_tensor);
    CHECK(r.max_tensor_rel < 1e-2);
    CHECK(r.kinked < r.checked / 2);
  }
}

TEST_CASE("focal loss scalar examples") {
  const LabelMask pos{Grid(1, 1, 1.0, Point2::Zero(), 1.0f), IdRaster::Ones(1, 1)};
  const WeightMap w1{Grid(1, 1, 1.0, Point2::Zero(), 1.0f)};
  CHECK(focal_loss(Grid(1, 1, 1.0, Point2::Zero(), 0.5f), pos, w1, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(focal_loss(Grid(1, 1, 1.0, Point2::Zero(), 0.9f), pos, w1, 2.0) ==
        doctest::Approx(0.01 * -std::log(0.9)).epsilon(1e-6));
  CHECK(0.01 * -std::log(0.9) == doctest::Approx(1.0536e-3).epsilon(1e-4));
  CHECK(focal_loss(Grid(1, 1, 1.0, Point2::Zero(), 1.0f), pos, w1, 2.0) < 1e-12);
  const LabelMask neg{Grid(1, 1, 1.0), IdRaster::Zero(1, 1)};
  CHECK(focal_loss(Grid(1, 1, 1.0, Point2::Zero(), 0.0f), neg, w1, 0.0) < 1e-6);
}

TEST_CASE("focal loss with gamma 0 and unit weights is binary cross-entropy") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 4 + static_cast<int>(rng.below(12)), w = 4 + static_cast<int>(rng.below(12));
    Grid pred(h, w, 1.0);
    LabelMask lab = oracle::random_label(rng, h, w);
    for (Eigen::Index i = 0; i < pred.size(); ++i) pred.values.data()[i] = static_cast<float>(rng.uniform(0.01, 0.99));
    const WeightMap ones{Grid(h, w, 1.0, Point2::Zero(), 1.0f)};
    double bce = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      const double p = pred.values.data()[i];
      bce -= lab.mask.values.data()[i] > 0.5f ? std::log(p) : std::log(1.0 - p);
    }
    CHECK(focal_loss(pred, lab, ones, 0.0) == doctest::Approx(bce).epsilon(1e-6));
  }
}

TEST_CASE("logit-space loss agrees with the probability form") {
  Rng rng(5);
  Matrix<double> z(1, 30);
  Grid pred(5, 6, 1.0);
  for (Eigen::Index i = 0; i < 30; ++i) {
    z(0, i) = rng.uniform(-6.0, 6.0);
    pred.values.data()[i] = static_cast<float>(sigmoid(z(0, i)));
  }
  const LabelMask lab = oracle::random_label(rng, 5, 6);
  const WeightMap w = weight_map(lab);
  const double a = focal_loss_logits<double>(z, lab.mask.values, w.weights.values, 2.0, nullptr);
  CHECK(a == doctest::Approx(focal_loss(pred, lab, w, 2.0)).epsilon(1e-5));
}

TEST_CASE("gradients are linear in the weight map") {
  const ModelArch arch = tiny_arch(1);
  auto batch = tiles(3, 2, 8, 1);
  ParamMap<float> p = init_params<float>(arch, 3);
  randomize_params(p, 3, 0.5);
  const auto g1 = backward<float>(p, arch, batch, 2.0f);

  auto doubled = batch;
  for (auto& t : doubled) t.weight.weights.values *= 2.0f;
  const auto g2 = backward<float>(p, arch, doubled, 2.0f);
  CHECK(g2.loss == doctest::Approx(2.0 * g1.loss));
  for (const auto& [name, t] : g1.grads) CHECK((g2.grads.at(name).data - 2.0f * t.data).cwiseAbs().maxCoeff() == 0.0f);

  auto zero = batch;
  for (auto& t : zero) t.weight.weights.values.setZero();
  const auto g0 = backward<float>(p, arch, zero, 2.0f);
  CHECK(g0.loss == 0.0f);
  for (const auto& [name, t] : g0.grads) CHECK(t.data.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamMap<double> p{{"a", Tensor<double>({3})}};
    p["a"].data << 1.0, -2.0, 0.5;
    const ParamMap<double> before = p;
    AdamState<double> st;
    adam_step(p, zeros_like(p), st, AdamConfig{});
    CHECK(p["a"].data == before.at("a").data);
    CHECK(st.step == 1);
  }
  SUBCASE("first step moves by about lr against the gradient sign") {
    for (double g : {1e-6, -3e-4, 0.7, -25.0}) {
      ParamMap<double> p{{"a", Tensor<double>({1})}};
      ParamMap<double> grad{{"a", Tensor<double>({1})}};
      grad["a"].data[0] = g;
      AdamState<double> st;
      AdamConfig cfg;
      adam_step(p, grad, st, cfg);
      const double d = p["a"].data[0];
      CHECK(std::abs(d) >= 0.99 * cfg.learning_rate);
      CHECK(std::abs(d) <= cfg.learning_rate);
      CHECK((d < 0) == (g > 0));
    }
  }
  SUBCASE("minimizes theta squared like the scalar reference") {
    ParamMap<double> p{{"t", Tensor<double>({1})}};
    p["t"].data[0] = 1.0;
    AdamState<double> st;
    const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
    double theta = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 200; ++t) {
      ParamMap<double> g{{"t", Tensor<double>({1})}};
      g["t"].data[0] = 2.0 * p["t"].data[0];
      adam_step(p, g, st, cfg);
      const double gr = 2.0 * theta;
      m = 0.9 * m + 0.1 * gr;
      v = 0.999 * v + 0.001 * gr * gr;
      theta -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(std::abs(p["t"].data[0]) < 0.05);
    CHECK(p["t"].data[0] == doctest::Approx(theta).epsilon(1e-12));
    CHECK(st.step == 200);
  }
  SUBCASE("shape mismatch") {
    ParamMap<double> p{{"a", Tensor<double>({2})}};
    ParamMap<double> g{{"a", Tensor<double>({3})}};
    AdamState<double> st;
    CHECK_THROWS_AS(adam_step(p, g, st, AdamConfig{}), ShapeMismatchError);
  }
}

TEST_CASE("forward contract") {
  ModelArch arch;
  const ParamMap<float> p = init_params<float>(arch, 42);
  Rng rng(1);
  const DatasetTile t = oracle::random_tile(rng, 64, 1);
  const Grid out = forward(p, arch, t.features);
  CHECK(out.height() == 64);
  CHECK(out.width() == 64);
  CHECK(out.origin == t.features.elevation().origin);
  // Zero-initialised output convolutions give sigmoid(0) everywhere.
  CHECK((out.values.array() == 0.5f).all());

  ParamMap<float> r = p;
  randomize_params(r, 9, 0.3);
  const Grid a = forward(r, arch, t.features);
  const Grid b = forward(r, arch, t.features);
  CHECK(a.values == b.values);
  CHECK((a.values.array() > 0.0f).all());
  CHECK((a.values.array() < 1.0f).all());
  CHECK((a.values.array() != 0.5f).any());

  // Same tensors inserted in reverse name order.
  ParamMap<float> rev;
  for (auto it = r.rbegin(); it != r.rend(); ++it) rev.emplace(it->first, it->second);
  CHECK(forward(rev, arch, t.features).values == a.values);

  FeatureStack odd;
  odd.add("elevation", Grid(60, 64, 1.0));
  CHECK_THROWS_AS(forward(r, arch, odd), ShapeMismatchError);
  FeatureStack two = t.features;
  two.add("flow", t.features.elevation());
  CHECK_THROWS_AS(forward(r, arch, two), ShapeMismatchError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ModelArch arch;
  arch.input_channels = 2;
  arch.gamma = 1.5f;
  ParamMap<float> p = init_params<float>(arch, 4);
  randomize_params(p, 4, 1.0);
  const Checkpoint ck{arch, p};
  const auto bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.arch.depth == arch.depth);
  CHECK(back.arch.base_channels == arch.base_channels);
  CHECK(back.arch.input_channels == 2);
  CHECK(back.arch.gamma == 1.5f);
  REQUIRE(back.tensors.size() == p.size());
  for (const auto& [name, t] : p) {
    CHECK(back.tensors.at(name).shape == t.shape);
    CHECK(back.tensors.at(name).data == t.data);
  }
  CHECK(serialize_checkpoint(back) == bytes);

  test::TempDir dir;
  write_checkpoint(ck, dir.path / "model.hcm");
  CHECK(test::file_bytes(dir.path / "model.hcm") == bytes);
  CHECK(serialize_checkpoint(read_checkpoint(dir.path / "model.hcm")) == bytes);
  CHECK(optimizer_path(dir.path / "model.hcm") == dir.path / "model.adam.hcm");

  AdamState<float> st = AdamState<float>::zeros(p);
  adam_step(p, p, st, AdamConfig{});
  const AdamState<float> st2 = optimizer_from_checkpoint(optimizer_checkpoint(arch, st));
  CHECK(st2.step == 1);
  for (const auto& [name, t] : st.m) CHECK(st2.m.at(name).data == t.data);
  for (const auto& [name, t] : st.v) CHECK(st2.v.at(name).data == t.data);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint({bytes.begin(), bytes.end() - 3}), IoError);
}

TEST_CASE("training") {
  const ModelArch arch = tiny_arch(1);
  const auto train_set = tiles(10, 6, 16, 1);
  const auto val_set = tiles(11, 2, 16, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 4;
  cfg.crop_cells = 14;

  SUBCASE("zero epochs return the initial parameters") {
    cfg.epochs = 0;
    const TrainResult r = train(train_set, val_set, arch, cfg);
    CHECK(r.history.empty());
    CHECK(r.best_epoch == -1);
    const ParamMap<float> init = init_params<float>(arch, cfg.seed);
    for (const auto& [name, t] : init) CHECK(r.best_params.at(name).data == t.data);
  }
  SUBCASE("fixed seed reproduces the history") {
    cfg.epochs = 3;
    const TrainResult a = train(train_set, val_set, arch, cfg);
    const TrainResult b = train(train_set, val_set, arch, cfg);
    REQUIRE(a.history.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.history[i].train_loss == b.history[i].train_loss);
      CHECK(a.history[i].val_loss == b.history[i].val_loss);
    }
    for (const auto& [name, t] : a.best_params) CHECK(b.best_params.at(name).data == t.data);
    CHECK(a.best_val_loss <= a.initial_val_loss);
  }
  SUBCASE("validation loss decreases over the first epochs") {
    cfg.epochs = 5;
    const TrainResult r = train(train_set, val_set, arch, cfg);
    CHECK(r.best_val_loss < r.initial_val_loss);
    CHECK(r.history.back().train_loss < r.history.front().train_loss);
  }
  SUBCASE("non-finite loss aborts") {
    auto broken = train_set;
    broken[0].features.layers[0].values(3, 3) = std::nanf("");
    cfg.epochs = 1;
    cfg.batch_size = 8;
    CHECK_THROWS_AS(train(broken, val_set, arch, cfg), DivergenceError);
  }
  SUBCASE("invalid configs") {
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(train_set, val_set, arch, cfg), InvalidArgument);
    cfg.batch_size = 4;
    CHECK_THROWS_AS(train({}, val_set, arch, cfg), InvalidArgument);
  }
}
