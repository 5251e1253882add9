#pragma once

#include <cmath>
#include <cstdint>

#include "hydrofix/segnet/tensor.hpp"

namespace hydrofix::segnet {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  ParamMap<Scalar> m, v;
  std::int64_t step = 0;

  static AdamState zeros(const ParamMap<Scalar>& params) { return {zeros_like(params), zeros_like(params), 0}; }
};

/// One bias-corrected ADAM update, in place.
template <typename Scalar>
void adam_step(ParamMap<Scalar>& params, const ParamMap<Scalar>& grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
  check_same_shapes(params, grads);
  if (state.m.empty()) state = AdamState<Scalar>::zeros(params);
  check_same_shapes(params, state.m);
  check_same_shapes(params, state.v);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, t));
  const Scalar lr = static_cast<Scalar>(cfg.learning_rate), eps = static_cast<Scalar>(cfg.epsilon);
  auto g = grads.begin();
  auto m = state.m.begin();
  auto v = state.v.begin();
  for (auto p = params.begin(); p != params.end(); ++p, ++g, ++m, ++v) {
    auto& mm = m->second.data;
    auto& vv = v->second.data;
    const auto& gg = g->second.data;
    mm = b1 * mm + (Scalar(1) - b1) * gg;
    vv = b2 * vv + (Scalar(1) - b2) * gg.cwiseAbs2();
    p->second.data.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
  }
}

}  // namespace hydrofix::segnet
