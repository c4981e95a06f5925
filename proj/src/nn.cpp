#include "palmar/nn.hpp"

#include <cmath>

namespace palmar::nn {

VecX softmax(const VecX& logits) {
  VecX shifted = logits.array() - logits.maxCoeff();
  VecX e = shifted.array().exp();
  return e / e.sum();
}

double cross_entropy(const VecX& probs, int label) {
  if (label < 0 || label >= probs.size()) throw ValidationError("cross_entropy: label out of range");
  return -std::log(std::max(probs[label], 1e-12));
}

// ---- Dense ------------------------------------------------------------------

Dense Dense::make(int out, int in, std::mt19937_64& rng) {
  Dense d;
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / in));
  d.W = MatX::NullaryExpr(out, in, [&]() { return gauss(rng); });
  d.b = VecX::Zero(out);
  d.gW = MatX::Zero(out, in);
  d.gb = VecX::Zero(out);
  d.vW = MatX::Zero(out, in);
  d.vb = VecX::Zero(out);
  return d;
}

VecX Dense::backward(const VecX& x, const VecX& dy) {
  gW.noalias() += dy * x.transpose();
  gb += dy;
  return W.transpose() * dy;
}

void Dense::zero_grad() {
  gW.setZero();
  gb.setZero();
}

void Dense::sgd_step(double lr, double momentum) {
  vW = momentum * vW - lr * gW;
  vb = momentum * vb - lr * gb;
  W += vW;
  b += vb;
}

void Dense::collect(std::vector<double*>& params, std::vector<double*>& grads) {
  for (long i = 0; i < W.size(); ++i) params.push_back(W.data() + i);
  for (long i = 0; i < gW.size(); ++i) grads.push_back(gW.data() + i);
  for (long i = 0; i < b.size(); ++i) params.push_back(b.data() + i);
  for (long i = 0; i < gb.size(); ++i) grads.push_back(gb.data() + i);
}

// ---- Conv2d -----------------------------------------------------------------

Conv2d Conv2d::make(int out_ch, int in_ch, int kernel, std::mt19937_64& rng) {
  Conv2d c;
  c.in_channels = in_ch;
  c.out_channels = out_ch;
  c.kernel = kernel;
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / (in_ch * kernel * kernel)));
  c.K.resize(static_cast<std::size_t>(out_ch));
  c.gK.resize(static_cast<std::size_t>(out_ch));
  c.vK.resize(static_cast<std::size_t>(out_ch));
  for (int o = 0; o < out_ch; ++o) {
    c.K[static_cast<std::size_t>(o)].resize(static_cast<std::size_t>(in_ch));
    c.gK[static_cast<std::size_t>(o)].resize(static_cast<std::size_t>(in_ch));
    c.vK[static_cast<std::size_t>(o)].resize(static_cast<std::size_t>(in_ch));
    for (int i = 0; i < in_ch; ++i) {
      c.K[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)] =
          MatX::NullaryExpr(kernel, kernel, [&]() { return gauss(rng); });
      c.gK[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)] = MatX::Zero(kernel, kernel);
      c.vK[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)] = MatX::Zero(kernel, kernel);
    }
  }
  c.b = VecX::Zero(out_ch);
  c.gb = VecX::Zero(out_ch);
  c.vb = VecX::Zero(out_ch);
  return c;
}

Tensor3 Conv2d::forward(const Tensor3& x) const {
  if (static_cast<int>(x.size()) != in_channels)
    throw ValidationError("Conv2d: input channel mismatch");
  const long H = x[0].rows(), W = x[0].cols();
  const long Ho = H - kernel + 1, Wo = W - kernel + 1;
  if (Ho <= 0 || Wo <= 0) throw ValidationError("Conv2d: input smaller than kernel");

  Tensor3 out(static_cast<std::size_t>(out_channels));
  for (int o = 0; o < out_channels; ++o) {
    MatX acc = MatX::Constant(Ho, Wo, b[o]);
    for (int i = 0; i < in_channels; ++i) {
      const MatX& k = K[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
      const MatX& xi = x[static_cast<std::size_t>(i)];
      for (int dy = 0; dy < kernel; ++dy)
        for (int dx = 0; dx < kernel; ++dx)
          acc.noalias() += k(dy, dx) * xi.block(dy, dx, Ho, Wo);
    }
    out[static_cast<std::size_t>(o)] = std::move(acc);
  }
  return out;
}

Tensor3 Conv2d::backward(const Tensor3& x, const Tensor3& dy) {
  const long H = x[0].rows(), W = x[0].cols();
  const long Ho = dy[0].rows(), Wo = dy[0].cols();

  Tensor3 dx(static_cast<std::size_t>(in_channels));
  for (int i = 0; i < in_channels; ++i) dx[static_cast<std::size_t>(i)] = MatX::Zero(H, W);

  for (int o = 0; o < out_channels; ++o) {
    const MatX& g = dy[static_cast<std::size_t>(o)];
    gb[o] += g.sum();
    for (int i = 0; i < in_channels; ++i) {
      MatX& gk = gK[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
      const MatX& k = K[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
      const MatX& xi = x[static_cast<std::size_t>(i)];
      MatX& dxi = dx[static_cast<std::size_t>(i)];
      for (int dy_ = 0; dy_ < kernel; ++dy_)
        for (int dx_ = 0; dx_ < kernel; ++dx_) {
          gk(dy_, dx_) += (xi.block(dy_, dx_, Ho, Wo).array() * g.array()).sum();
          dxi.block(dy_, dx_, Ho, Wo).noalias() += k(dy_, dx_) * g;
        }
    }
  }
  return dx;
}

void Conv2d::zero_grad() {
  for (auto& row : gK)
    for (MatX& g : row) g.setZero();
  gb.setZero();
}

void Conv2d::sgd_step(double lr, double momentum) {
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < in_channels; ++i) {
      MatX& v = vK[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
      v = momentum * v - lr * gK[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
      K[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)] += v;
    }
  vb = momentum * vb - lr * gb;
  b += vb;
}

void Conv2d::collect(std::vector<double*>& params, std::vector<double*>& grads) {
  for (std::size_t o = 0; o < K.size(); ++o)
    for (std::size_t i = 0; i < K[o].size(); ++i) {
      for (long k = 0; k < K[o][i].size(); ++k) params.push_back(K[o][i].data() + k);
      for (long k = 0; k < gK[o][i].size(); ++k) grads.push_back(gK[o][i].data() + k);
    }
  for (long i = 0; i < b.size(); ++i) params.push_back(b.data() + i);
  for (long i = 0; i < gb.size(); ++i) grads.push_back(gb.data() + i);
}

// ---- MaxPool2 ---------------------------------------------------------------

Tensor3 MaxPool2::forward(const Tensor3& x, std::vector<Eigen::MatrixXi>* argmax) {
  Tensor3 out(x.size());
  if (argmax) argmax->resize(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    const long Ho = x[c].rows() / 2, Wo = x[c].cols() / 2;
    MatX o(Ho, Wo);
    Eigen::MatrixXi am(Ho, Wo);
    for (long i = 0; i < Ho; ++i)
      for (long j = 0; j < Wo; ++j) {
        double best = x[c](2 * i, 2 * j);
        int arg = 0;
        const double cands[4] = {x[c](2 * i, 2 * j), x[c](2 * i + 1, 2 * j),
                                 x[c](2 * i, 2 * j + 1), x[c](2 * i + 1, 2 * j + 1)};
        for (int k = 1; k < 4; ++k)
          if (cands[k] > best) {
            best = cands[k];
            arg = k;
          }
        o(i, j) = best;
        am(i, j) = arg;
      }
    out[c] = std::move(o);
    if (argmax) (*argmax)[c] = std::move(am);
  }
  return out;
}

Tensor3 MaxPool2::backward(const Tensor3& dy, const std::vector<Eigen::MatrixXi>& argmax,
                           int in_rows, int in_cols) {
  Tensor3 dx(dy.size());
  for (std::size_t c = 0; c < dy.size(); ++c) {
    MatX d = MatX::Zero(in_rows, in_cols);
    for (long i = 0; i < dy[c].rows(); ++i)
      for (long j = 0; j < dy[c].cols(); ++j) {
        int arg = argmax[c](i, j);
        long di = 2 * i + (arg % 2);
        long dj = 2 * j + (arg / 2);
        d(di, dj) += dy[c](i, j);
      }
    dx[c] = std::move(d);
  }
  return dx;
}

}  // namespace palmar::nn
