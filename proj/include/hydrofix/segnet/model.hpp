#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hydrofix/hydro.hpp"
#include "hydrofix/labels.hpp"
#include "hydrofix/rng.hpp"
#include "hydrofix/segnet/tape.hpp"

namespace hydrofix::segnet {

/// Encoder-decoder segmenter shape. One encoder stack per input channel;
/// level l works at 1/2^l resolution with base_channels * 2^l channels.
struct ModelArch {
  int depth = 3;
  int base_channels = 8;
  int input_channels = 1;
  float gamma = 2.0f;  ///< focal loss exponent the model was trained with

  int channels_at(int level) const { return base_channels << level; }
  int spatial_multiple() const { return 1 << depth; }
  void validate() const;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

namespace detail {

inline std::string enc(int e, const std::string& rest) { return "enc" + std::to_string(e) + "." + rest; }
inline std::string lvl(int l) { return "l" + std::to_string(l); }

template <typename Scalar>
void add_conv(ParamMap<Scalar>& p, const std::string& name, int out_ch, int in_ch, int k, bool bias) {
  p.emplace(name + ".w", Tensor<Scalar>({out_ch, in_ch, k, k}));
  if (bias) p.emplace(name + ".b", Tensor<Scalar>({out_ch}));
}

}  // namespace detail

/// Parameter tensors with all-zero values, shaped for `arch`.
template <typename Scalar>
ParamMap<Scalar> make_param_shapes(const ModelArch& arch) {
  using detail::enc;
  using detail::lvl;
  arch.validate();
  ParamMap<Scalar> p;
  const int c0 = arch.base_channels;
  const int encoders = arch.input_channels;
  for (int e = 0; e < encoders; ++e) {
    detail::add_conv(p, enc(e, "stem"), c0, 1, 3, true);
    for (int l = 0; l < arch.depth; ++l) {
      const int c = arch.channels_at(l);
      detail::add_conv(p, enc(e, lvl(l) + ".res.c1"), c, c, 3, true);
      detail::add_conv(p, enc(e, lvl(l) + ".res.c2"), c, c, 3, true);
      detail::add_conv(p, enc(e, lvl(l) + ".down"), 2 * c, c, 3, true);
    }
  }
  for (int l = arch.depth - 1; l >= 0; --l) {
    const int below = l == arch.depth - 1 ? encoders * arch.channels_at(arch.depth) : arch.channels_at(l + 1);
    detail::add_conv(p, "dec." + lvl(l) + ".upconv", arch.channels_at(l), below + encoders * arch.channels_at(l), 3,
                     true);
  }
  detail::add_conv(p, "head.c1", c0, c0, 3, true);
  detail::add_conv(p, "head.c2", 1, c0, 3, true);
  detail::add_conv(p, "head.proj", 1, c0, 1, false);
  return p;
}

inline bool is_head_output(const std::string& name) {
  return name.rfind("head.c2", 0) == 0 || name.rfind("head.proj", 0) == 0;
}

/// Kernels ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases; the head's
/// output convolutions start at zero so every initial prediction is 0.5.
/// Tensors are filled in name order from one seeded stream.
template <typename Scalar>
ParamMap<Scalar> init_params(const ModelArch& arch, std::uint64_t seed) {
  ParamMap<Scalar> p = make_param_shapes<Scalar>(arch);
  Rng rng(seed);
  for (auto& [name, t] : p) {
    if (t.shape.size() != 4 || is_head_output(name)) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1] * t.shape[2] * t.shape[3]));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  return p;
}

/// Every tensor (biases and head included) ~ U(-scale, scale). Test helper
/// for gradient checks where zero-initialised heads would hide gradients.
template <typename Scalar>
void randomize_params(ParamMap<Scalar>& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& [name, t] : p)
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<Scalar>(rng.uniform(-scale, scale));
}

/// Network input matrix (channels, rows*cols). Elevation is centered on its
/// tile mean; nodata cells become 0 after centering.
template <typename Scalar>
Matrix<Scalar> input_matrix(const FeatureStack& features) {
  features.validate();
  const Eigen::Index n = features.elevation().size();
  Matrix<Scalar> x(static_cast<Eigen::Index>(features.channels()), n);
  for (std::size_t ch = 0; ch < features.channels(); ++ch) {
    const Grid& g = features.layers[ch];
    const float* v = g.values.data();
    double mean = 0.0;
    if (features.names[ch] == "elevation") {
      Eigen::Index valid = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (v[i] != g.nodata) {
          mean += v[i];
          ++valid;
        }
      mean = valid > 0 ? mean / static_cast<double>(valid) : 0.0;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      x(static_cast<Eigen::Index>(ch), i) = v[i] == g.nodata ? Scalar(0) : static_cast<Scalar>(v[i] - mean);
  }
  return x;
}

/// Records the network on `tape` and returns the logits node (1 channel).
template <typename Scalar>
int build_network(Tape<Scalar>& tape, const ModelArch& arch, const Matrix<Scalar>& input, int rows, int cols) {
  using detail::enc;
  using detail::lvl;
  if (input.rows() != arch.input_channels)
    throw ShapeMismatchError("input has " + std::to_string(input.rows()) + " channels, model expects " +
                             std::to_string(arch.input_channels));
  if (rows % arch.spatial_multiple() != 0 || cols % arch.spatial_multiple() != 0)
    throw ShapeMismatchError("input dims must be divisible by 2^depth");

  const int encoders = arch.input_channels;
  std::vector<std::vector<int>> lateral(static_cast<std::size_t>(arch.depth));
  std::vector<int> bottom;
  for (int e = 0; e < encoders; ++e) {
    int x = tape.input(input.row(e), rows, cols);
    x = tape.relu(tape.conv(x, enc(e, "stem"), 1));
    for (int l = 0; l < arch.depth; ++l) {
      const std::string base = enc(e, lvl(l));
      const int h = tape.relu(tape.conv(x, base + ".res.c1", 1));
      x = tape.relu(tape.add(x, tape.conv(h, base + ".res.c2", 1)));
      lateral[static_cast<std::size_t>(l)].push_back(x);
      x = tape.relu(tape.conv(x, base + ".down", 2));
    }
    bottom.push_back(x);
  }
  int d = encoders == 1 ? bottom.front() : tape.concat(bottom);
  for (int l = arch.depth - 1; l >= 0; --l) {
    std::vector<int> parts{tape.upsample2(d)};
    for (int id : lateral[static_cast<std::size_t>(l)]) parts.push_back(id);
    d = tape.relu(tape.conv(tape.concat(parts), "dec." + lvl(l) + ".upconv", 1));
  }
  const int h = tape.relu(tape.conv(d, "head.c1", 1));
  return tape.add(tape.conv(h, "head.c2", 1), tape.conv(d, "head.proj", 1, false));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// Probabilities in [eps, 1-eps] for one input (channels, rows*cols).
template <typename Scalar>
Matrix<Scalar> predict_matrix(const ParamMap<Scalar>& params, const ModelArch& arch, const Matrix<Scalar>& input,
                              int rows, int cols) {
  Tape<Scalar> tape(params, nullptr);
  const int out = build_network(tape, arch, input, rows, cols);
  const Scalar lo = static_cast<Scalar>(kProbabilityEpsilon);
  return tape.node(out).value.unaryExpr([lo](Scalar z) { return std::clamp(sigmoid(z), lo, Scalar(1) - lo); });
}

/// Raises the allocator's mmap and trim thresholds so tape buffers are
/// reused instead of being mapped and unmapped per op. No-op off glibc.
void keep_heap_mapped();

/// Probability grid with the georeference of the elevation layer.
Grid forward(const ParamMap<float>& params, const ModelArch& arch, const FeatureStack& input);

/// Focal loss of one cell: -(1-p_t)^gamma log(p_t), p clamped to [eps, 1-eps].
template <typename Scalar>
Scalar focal_term(Scalar p, bool positive, Scalar gamma) {
  const Scalar eps = static_cast<Scalar>(kProbabilityEpsilon);
  p = std::clamp(p, eps, Scalar(1) - eps);
  const Scalar pt = positive ? p : Scalar(1) - p;
  return -std::pow(Scalar(1) - pt, gamma) * std::log(pt);
}

/// Sum_ij W_ij * focal(pred_ij, y_ij).
double focal_loss(const Grid& pred, const LabelMask& label, const WeightMap& weight, double gamma);

/// Weighted focal loss evaluated from logits, with d(loss)/d(logit) written
/// into `dlogits` when non-null.
template <typename Scalar>
Scalar focal_loss_logits(const Matrix<Scalar>& logits, const Eigen::Ref<const RasterF>& label,
                         const Eigen::Ref<const RasterF>& weight, Scalar gamma, Matrix<Scalar>* dlogits) {
  const Eigen::Index n = logits.size();
  if (label.size() != n || weight.size() != n) throw ShapeMismatchError("focal loss: size mismatch");
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  const Scalar eps = static_cast<Scalar>(kProbabilityEpsilon);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool positive = label.data()[i] >= 0.5f;
    const Scalar w = static_cast<Scalar>(weight.data()[i]);
    const Scalar z = logits.data()[i];
    const Scalar s = positive ? Scalar(1) : Scalar(-1);
    // p_t = sigmoid(s z), 1 - p_t = sigmoid(-s z), both clamped like the loss.
    const Scalar pt = std::clamp(sigmoid(s * z), eps, Scalar(1) - eps);
    const Scalar qt = std::clamp(sigmoid(-s * z), eps, Scalar(1) - eps);
    const Scalar log_pt = std::log(pt);
    const Scalar mod = std::pow(qt, gamma);
    total += w * (-mod * log_pt);
    if (dlogits) dlogits->data()[i] = w * s * (gamma * pt * mod * log_pt - mod * qt);
  }
  return total;
}

/// Summed loss and parameter gradients over a batch.
template <typename Scalar>
struct BatchGradient {
  Scalar loss = 0;
  ParamMap<Scalar> grads;
};

/// Gradients of the summed batch loss. Samples are processed in order, so
/// accumulation is deterministic.
template <typename Scalar>
BatchGradient<Scalar> backward(const ParamMap<Scalar>& params, const ModelArch& arch,
                               std::span<const DatasetTile> batch, Scalar gamma) {
  if (batch.empty()) throw InvalidArgument("backward: empty batch");
  BatchGradient<Scalar> out{Scalar(0), zeros_like(params)};
  for (const DatasetTile& tile : batch) {
    const Grid& dem = tile.features.elevation();
    if (tile.label.mask.width() != dem.width() || tile.weight.weights.width() != dem.width() ||
        tile.label.mask.height() != dem.height() || tile.weight.weights.height() != dem.height())
      throw ShapeMismatchError("backward: features, label and weight dims differ");
    const int rows = static_cast<int>(dem.height()), cols = static_cast<int>(dem.width());
    Tape<Scalar> tape(params, &out.grads);
    const int logits = build_network(tape, arch, input_matrix<Scalar>(tile.features), rows, cols);
    Matrix<Scalar> dz;
    out.loss += focal_loss_logits<Scalar>(tape.node(logits).value, tile.label.mask.values,
                                          tile.weight.weights.values, gamma, &dz);
    tape.backward(logits, dz);
  }
  return out;
}

/// Loss only (no gradient bookkeeping).
template <typename Scalar>
Scalar batch_loss(const ParamMap<Scalar>& params, const ModelArch& arch, std::span<const DatasetTile> batch,
                  Scalar gamma) {
  Scalar total = 0;
  for (const DatasetTile& tile : batch) {
    const Grid& dem = tile.features.elevation();
    Tape<Scalar> tape(params, nullptr);
    const int logits = build_network(tape, arch, input_matrix<Scalar>(tile.features), static_cast<int>(dem.height()),
                                     static_cast<int>(dem.width()));
    total += focal_loss_logits<Scalar>(tape.node(logits).value, tile.label.mask.values, tile.weight.weights.values,
                                       gamma, nullptr);
  }
  return total;
}

}  // namespace hydrofix::segnet
