#pragma once

#include <Eigen/Core>

#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hydrofix/error.hpp"

namespace hydrofix::segnet {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense tensor with an explicit shape, stored flat in row-major order.
/// Kernels are (out_ch, in_ch, k, k), biases (out_ch), feature maps
/// (channels, rows, cols).
template <typename Scalar>
struct Tensor {
  std::vector<int> shape;
  Vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(Vector<Scalar>::Zero(numel(shape))) {}

  static Eigen::Index numel(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), Eigen::Index{1}, std::multiplies<>());
  }
  Eigen::Index size() const { return data.size(); }

  /// View as a (shape[0], rest) row-major matrix.
  Eigen::Map<const Matrix<Scalar>> as_matrix() const {
    return {data.data(), shape.at(0), data.size() / shape.at(0)};
  }
  Eigen::Map<Matrix<Scalar>> as_matrix() { return {data.data(), shape.at(0), data.size() / shape.at(0)}; }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.shape = shape;
    t.data = data.template cast<Other>();
    return t;
  }
};

/// Named parameter collection; std::map keeps iteration order by name.
template <typename Scalar>
using ParamMap = std::map<std::string, Tensor<Scalar>>;

template <typename To, typename From>
ParamMap<To> cast_params(const ParamMap<From>& in) {
  ParamMap<To> out;
  for (const auto& [name, t] : in) out.emplace(name, t.template cast<To>());
  return out;
}

template <typename Scalar>
ParamMap<Scalar> zeros_like(const ParamMap<Scalar>& in) {
  ParamMap<Scalar> out;
  for (const auto& [name, t] : in) out.emplace(name, Tensor<Scalar>(t.shape));
  return out;
}

template <typename Scalar>
void check_same_shapes(const ParamMap<Scalar>& a, const ParamMap<Scalar>& b) {
  if (a.size() != b.size()) throw ShapeMismatchError("parameter maps differ in size");
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
    if (ia->first != ib->first || ia->second.shape != ib->second.shape)
      throw ShapeMismatchError("parameter map mismatch at " + ia->first);
}

}  // namespace hydrofix::segnet
