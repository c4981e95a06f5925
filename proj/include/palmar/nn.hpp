#pragma once

#include <random>
#include <vector>

#include "palmar/types.hpp"

namespace palmar::nn {

/// Channel-stacked image tensor (C matrices of H x W).
using Tensor3 = std::vector<MatX>;

// ---- activations -----------------------------------------------------------

inline VecX relu(const VecX& x) { return x.cwiseMax(0.0); }
inline VecX relu_backward(const VecX& x, const VecX& dy) {
  return (x.array() > 0.0).select(dy, VecX::Zero(dy.size()));
}
inline VecX sigmoid(const VecX& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }
inline VecX softplus(const VecX& x) {
  // log(1 + e^x), stable for large |x|
  return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
}
VecX softmax(const VecX& logits);
/// -log(probs[label]), probabilities clamped at 1e-12.
double cross_entropy(const VecX& probs, int label);

// ---- dense layer ------------------------------------------------------------

struct Dense {
  MatX W;  // out x in
  VecX b;
  MatX gW;
  VecX gb;
  MatX vW;  // momentum buffers
  VecX vb;

  static Dense make(int out, int in, std::mt19937_64& rng);

  VecX forward(const VecX& x) const { return W * x + b; }
  /// Accumulates parameter gradients for input x and upstream dy; returns dx.
  VecX backward(const VecX& x, const VecX& dy);

  void zero_grad();
  void sgd_step(double lr, double momentum);
  void collect(std::vector<double*>& params, std::vector<double*>& grads);
};

// ---- convolution ------------------------------------------------------------

/// Valid 2D cross-correlation with square kernels, stride 1.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<std::vector<MatX>> K;  // [out][in], kernel x kernel
  VecX b;
  std::vector<std::vector<MatX>> gK;
  VecX gb;
  std::vector<std::vector<MatX>> vK;
  VecX vb;

  static Conv2d make(int out_ch, int in_ch, int kernel, std::mt19937_64& rng);

  Tensor3 forward(const Tensor3& x) const;
  Tensor3 backward(const Tensor3& x, const Tensor3& dy);

  void zero_grad();
  void sgd_step(double lr, double momentum);
  void collect(std::vector<double*>& params, std::vector<double*>& grads);
};

/// 2x2 max pooling, stride 2, floor semantics on odd extents.
struct MaxPool2 {
  /// argmax[c](i,j) stores the flat in-window offset (0..3) of the winner.
  static Tensor3 forward(const Tensor3& x, std::vector<Eigen::MatrixXi>* argmax);
  static Tensor3 backward(const Tensor3& dy, const std::vector<Eigen::MatrixXi>& argmax, int in_rows,
                          int in_cols);
};

inline VecX flatten(const Tensor3& x) {
  long total = 0;
  for (const MatX& c : x) total += c.size();
  VecX v(total );
  long at = 0;
  for (const MatX& c : x) {
    v.segment(at, c.size()) = Eigen::Map<const VecX>(c.data(), c.size());
    at += c.size();
  }
  return v;
}

inline Tensor3 unflatten(const VecX& v, int channels, int rows, int cols) {
  Tensor3 x(static_cast<std::size_t>(channels));
  long at = 0;
  for (int c = 0; c < channels; ++c) {
    x[static_cast<std::size_t>(c)] = Eigen::Map<const MatX>(v.data() + at, rows, cols);
    at += static_cast<long>(rows) * cols;
  }
  return x;
}

}  // namespace palmar::nn
