#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hydrofix/segnet/tensor.hpp"

namespace hydrofix::segnet {

/// Feature-map convolutions lowered to GEMM through im2col. Feature maps are
/// (channels, rows*cols) row-major matrices; kernels are square with zero
/// "same" padding of k/2.
template <typename Scalar>
struct ConvGeometry {
  int in_rows, in_cols, k, stride;

  int pad() const { return k / 2; }
  int out_rows() const { return (in_rows + 2 * pad() - k) / stride + 1; }
  int out_cols() const { return (in_cols + 2 * pad() - k) / stride + 1; }

  Matrix<Scalar> im2col(const Matrix<Scalar>& x) const {
    const int channels = static_cast<int>(x.rows());
    const int orows = out_rows(), ocols = out_cols();
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(channels) * k * k,
                                               static_cast<Eigen::Index>(orows) * ocols);
    for (int ch = 0; ch < channels; ++ch) {
      const Scalar* src = x.data() + static_cast<Eigen::Index>(ch) * in_rows * in_cols;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          Scalar* dst = cols.data() + (static_cast<Eigen::Index>(ch) * k * k + ky * k + kx) * orows * ocols;
          for (int oy = 0; oy < orows; ++oy) {
            const int iy = oy * stride + ky - pad();
            if (iy < 0 || iy >= in_rows) continue;
            const Scalar* row = src + static_cast<Eigen::Index>(iy) * in_cols;
            Scalar* out = dst + static_cast<Eigen::Index>(oy) * ocols;
            if (stride == 1) {
              const int lo = std::max(0, pad() - kx), hi = std::min(ocols, in_cols + pad() - kx);
              for (int ox = lo; ox < hi; ++ox) out[ox] = row[ox + kx - pad()];
            } else {
              for (int ox = 0; ox < ocols; ++ox) {
                const int ix = ox * stride + kx - pad();
                if (ix >= 0 && ix < in_cols) out[ox] = row[ix];
              }
            }
          }
        }
      }
    }
    return cols;
  }

  /// Adjoint of im2col: scatter-add columns back into a feature map.
  void col2im_add(const Matrix<Scalar>& cols, Matrix<Scalar>& dx) const {
    const int channels = static_cast<int>(dx.rows());
    const int orows = out_rows(), ocols = out_cols();
    for (int ch = 0; ch < channels; ++ch) {
      Scalar* dst = dx.data() + static_cast<Eigen::Index>(ch) * in_rows * in_cols;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Scalar* src = cols.data() + (static_cast<Eigen::Index>(ch) * k * k + ky * k + kx) * orows * ocols;
          for (int oy = 0; oy < orows; ++oy) {
            const int iy = oy * stride + ky - pad();
            if (iy < 0 || iy >= in_rows) continue;
            Scalar* row = dst + static_cast<Eigen::Index>(iy) * in_cols;
            const Scalar* in = src + static_cast<Eigen::Index>(oy) * ocols;
            for (int ox = 0; ox < ocols; ++ox) {
              const int ix = ox * stride + kx - pad();
              if (ix >= 0 && ix < in_cols) row[ix] += in[ox];
            }
          }
        }
      }
    }
  }
};

/// Minimal reverse-mode tape over the handful of ops the segmenter uses.
///
/// Nodes are appended in evaluation order, so replaying the recorded backward
/// closures in reverse is a valid topological order. When constructed without
/// a gradient map the tape only evaluates and keeps no backward state.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;

  struct Node {
    Mat value;
    Mat grad;
    int rows = 0, cols = 0;
  };

  Tape(const ParamMap<Scalar>& params, ParamMap<Scalar>* grads) : params_(params), grads_(grads) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  int input(Mat value, int rows, int cols) { return push(std::move(value), rows, cols); }

  int conv(int x, const std::string& name, int stride, bool bias = true) {
    const Tensor<Scalar>& w = param(name + ".w");
    const int in_ch = w.shape[1], k = w.shape[2];
    const Node& in = node(x);
    if (in.value.rows() != in_ch) throw ShapeMismatchError("conv " + name + ": input channel mismatch");
    const ConvGeometry<Scalar> geo{in.rows, in.cols, k, stride};
    auto cols = std::make_shared<Mat>(k == 1 && stride == 1 ? in.value : geo.im2col(in.value));
    Mat y = w.as_matrix() * (*cols);
    if (bias) y.colwise() += param(name + ".b").data;
    const int id = push(std::move(y), geo.out_rows(), geo.out_cols());
    if (recording()) {
      backs_.push_back([this, x, id, name, geo, cols, bias] {
        const Mat& dy = nodes_[static_cast<std::size_t>(id)].grad;
        const Tensor<Scalar>& w = param(name + ".w");
        grad(name + ".w").as_matrix().noalias() += dy * cols->transpose();
        if (bias) grad(name + ".b").data += dy.rowwise().sum();
        Mat dcols = w.as_matrix().transpose() * dy;
        Node& in = nodes_[static_cast<std::size_t>(x)];
        ensure_grad(in);
        if (geo.k == 1 && geo.stride == 1) {
          in.grad += dcols;
        } else {
          geo.col2im_add(dcols, in.grad);
        }
      });
    }
    return id;
  }

  int relu(int x) {
    const int id = push(node(x).value.cwiseMax(Scalar(0)), node(x).rows, node(x).cols);
    if (recording()) {
      backs_.push_back([this, x, id] {
        Node& out = nodes_[static_cast<std::size_t>(id)];
        Node& in = nodes_[static_cast<std::size_t>(x)];
        ensure_grad(in);
        in.grad.array() += (out.value.array() > Scalar(0)).select(out.grad.array(), Scalar(0));
      });
    }
    return id;
  }

  int add(int a, int b) {
    if (node(a).value.rows() != node(b).value.rows() || node(a).value.cols() != node(b).value.cols())
      throw ShapeMismatchError("add: shape mismatch");
    const int id = push(node(a).value + node(b).value, node(a).rows, node(a).cols);
    if (recording()) {
      backs_.push_back([this, a, b, id] {
        const Mat& g = nodes_[static_cast<std::size_t>(id)].grad;
        for (int src : {a, b}) {
          Node& in = nodes_[static_cast<std::size_t>(src)];
          ensure_grad(in);
          in.grad += g;
        }
      });
    }
    return id;
  }

  /// 2x nearest-neighbour upsampling.
  int upsample2(int x) {
    const Node& in = node(x);
    const int r = in.rows, c = in.cols;
    Mat y(in.value.rows(), static_cast<Eigen::Index>(4) * r * c);
    for (Eigen::Index ch = 0; ch < in.value.rows(); ++ch)
      for (int i = 0; i < 2 * r; ++i)
        for (int j = 0; j < 2 * c; ++j) y(ch, i * 2 * c + j) = in.value(ch, (i / 2) * c + j / 2);
    const int id = push(std::move(y), 2 * r, 2 * c);
    if (recording()) {
      backs_.push_back([this, x, id, r, c] {
        const Mat& g = nodes_[static_cast<std::size_t>(id)].grad;
        Node& in = nodes_[static_cast<std::size_t>(x)];
        ensure_grad(in);
        for (Eigen::Index ch = 0; ch < g.rows(); ++ch)
          for (int i = 0; i < 2 * r; ++i)
            for (int j = 0; j < 2 * c; ++j) in.grad(ch, (i / 2) * c + j / 2) += g(ch, i * 2 * c + j);
      });
    }
    return id;
  }

  /// Channel concatenation.
  int concat(std::span<const int> parts) {
    Eigen::Index channels = 0;
    const int r = node(parts[0]).rows, c = node(parts[0]).cols;
    for (int p : parts) {
      if (node(p).rows != r || node(p).cols != c) throw ShapeMismatchError("concat: spatial mismatch");
      channels += node(p).value.rows();
    }
    Mat y(channels, static_cast<Eigen::Index>(r) * c);
    Eigen::Index offset = 0;
    for (int p : parts) {
      y.middleRows(offset, node(p).value.rows()) = node(p).value;
      offset += node(p).value.rows();
    }
    const int id = push(std::move(y), r, c);
    if (recording()) {
      std::vector<int> ids(parts.begin(), parts.end());
      backs_.push_back([this, ids, id] {
        const Mat& g = nodes_[static_cast<std::size_t>(id)].grad;
        Eigen::Index off = 0;
        for (int p : ids) {
          Node& in = nodes_[static_cast<std::size_t>(p)];
          ensure_grad(in);
          in.grad += g.middleRows(off, in.value.rows());
          off += in.value.rows();
        }
      });
    }
    return id;
  }

  /// Seed d(loss)/d(out) and run the recorded closures in reverse.
  void backward(int out, const Mat& dout) {
    if (!recording()) throw Error("tape was built without gradient storage");
    Node& o = nodes_[static_cast<std::size_t>(out)];
    ensure_grad(o);
    o.grad += dout;
    for (auto it = backs_.rbegin(); it != backs_.rend(); ++it) (*it)();
  }

 private:
  bool recording() const { return grads_ != nullptr; }

  int push(Mat value, int rows, int cols) {
    nodes_.push_back({std::move(value), Mat(), rows, cols});
    return static_cast<int>(nodes_.size()) - 1;
  }

  static void ensure_grad(Node& n) {
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }

  const Tensor<Scalar>& param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ShapeMismatchError("missing parameter " + name);
    return it->second;
  }
  Tensor<Scalar>& grad(const std::string& name) {
    auto it = grads_->find(name);
    if (it == grads_->end()) throw ShapeMismatchError("missing gradient slot " + name);
    return it->second;
  }

  const ParamMap<Scalar>& params_;
  ParamMap<Scalar>* grads_;
  // Nodes are addressed by index; backward closures index into this vector so
  // its reallocation is harmless.
  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backs_;
};

}  // namespace hydrofix::segnet
