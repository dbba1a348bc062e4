#pragma once

#include <cmath>

#include "skelgen/types.hpp"

namespace skelgen {

// Row-wise layer normalization. `gamma`/`beta` are 1 x D; pass empty
// matrices for the affine-free variant.
template <class S>
struct LayerNormCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, S eps,
                  LayerNormCache<S>* cache = nullptr) {
  const Index d = x.cols();
  Mat<S> xhat(x.rows(), d);
  Vec<S> rstd(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const S mean = x.row(i).mean();
    const S var = (x.row(i).array() - mean).square().sum() / static_cast<S>(d);
    rstd(i) = S(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Mat<S> y = xhat;
  if (gamma.size() > 0) {
    y.array().rowwise() *= gamma.row(0).array();
    y.array().rowwise() += beta.row(0).array();
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

// Returns dx; accumulates into dgamma/dbeta when gamma is non-empty.
template <class S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const LayerNormCache<S>& cache, const Mat<S>& gamma,
                           Mat<S>* dgamma, Mat<S>* dbeta) {
  const Index d = dy.cols();
  Mat<S> dxhat = dy;
  if (gamma.size() > 0) {
    if (dgamma) dgamma->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    if (dbeta) dbeta->row(0) += dy.colwise().sum();
    dxhat.array().rowwise() *= gamma.row(0).array();
  }
  Mat<S> dx(dy.rows(), d);
  for (Index i = 0; i < dy.rows(); ++i) {
    const S m1 = dxhat.row(i).mean();
    const S m2 = dxhat.row(i).dot(cache.xhat.row(i)) / static_cast<S>(d);
    dx.row(i) = cache.rstd(i) *
                (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

// tanh-approximated GELU. gelu(x) - gelu(-x) == x holds exactly in exact
// arithmetic, which the fusion head relies on for its passthrough setting.
template <class S>
inline S gelu(S x) {
  constexpr S c = S(0.7978845608028654);
  constexpr S a = S(0.044715);
  return S(0.5) * x * (S(1) + std::tanh(c * (x + a * x * x * x)));
}

template <class S>
inline S gelu_grad(S x) {
  constexpr S c = S(0.7978845608028654);
  constexpr S a = S(0.044715);
  const S t = std::tanh(c * (x + a * x * x * x));
  return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * c * (S(1) + S(3) * a * x * x);
}

// Matrix forms use Eigen's vectorized tanh.
template <class S>
Mat<S> gelu(const Mat<S>& x) {
  constexpr S c = S(0.7978845608028654);
  constexpr S a = S(0.044715);
  const auto xa = x.array();
  return (S(0.5) * xa * (S(1) + (c * (xa + a * xa.cube())).tanh())).matrix();
}

template <class S>
Mat<S> gelu_backward(const Mat<S>& dy, const Mat<S>& x) {
  constexpr S c = S(0.7978845608028654);
  constexpr S a = S(0.044715);
  const auto xa = x.array();
  const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> t = (c * (xa + a * xa.cube())).tanh();
  return (dy.array() * (S(0.5) * (S(1) + t) +
                        S(0.5) * xa * (S(1) - t.square()) * c * (S(1) + S(3) * a * xa.square())))
      .matrix();
}

// Numerically stable softmax of a row vector.
template <class Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  const S m = logits.maxCoeff();
  RowVec<S> e = (logits.array() - m).exp().matrix();
  return RowVec<S>(e / e.sum());
}

}  // namespace skelgen
