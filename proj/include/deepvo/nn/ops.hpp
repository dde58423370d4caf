#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "deepvo/nn/tensor.hpp"

// Forward/backward kernels. Activations are NCHW; backward functions accumulate
// parameter gradients into the supplied buffers and return the input gradient.
namespace deepvo::nn {

struct ConvGeometry {
  Index stride = 1;
  Index padding = 0;
};

inline Index conv_output_size(Index in, Index kernel, Index stride, Index padding) {
  const Index span = in + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

namespace detail {

/// Output columns [lo, hi) whose input column ox*stride + offset lies inside [0, w).
inline std::pair<Index, Index> valid_range(Index offset, Index stride, Index w, Index out_w) {
  Index lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  Index hi = w - offset <= 0 ? 0 : (w - offset - 1) / stride + 1;
  lo = std::min(lo, out_w);
  hi = std::clamp(hi, lo, out_w);
  return {lo, hi};
}

template <typename Scalar>
void im2col(const Scalar* img, Index channels, Index h, Index w, Index k, const ConvGeometry& g, Index out_h,
            Index out_w, Scalar* col, Index ld) {
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        Scalar* row = col + ((c * k + ki) * k + kj) * ld;
        const Index offset = kj - g.padding;
        const auto [lo, hi] = valid_range(offset, g.stride, w, out_w);
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * g.stride + ki - g.padding;
          Scalar* dst = row + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = img + (c * h + iy) * w + offset;
          std::fill(dst, dst + lo, Scalar(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + out_w, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* col, Index channels, Index h, Index w, Index k, const ConvGeometry& g, Index out_h,
            Index out_w, Scalar* img, Index ld) {
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Scalar* row = col + ((c * k + ki) * k + kj) * ld;
        const Index offset = kj - g.padding;
        const auto [lo, hi] = valid_range(offset, g.stride, w, out_w);
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * g.stride + ki - g.padding;
          if (iy < 0 || iy >= h) continue;
          Scalar* dst = img + (c * h + iy) * w + offset;
          const Scalar* src = row + oy * out_w;
          for (Index ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

/// Samples per im2col block so that each GEMM sees at least ~4k columns.
inline Index conv_chunk(Index batch, Index plane) {
  return std::clamp<Index>(4096 / std::max<Index>(plane, 1), 1, batch);
}

}  // namespace detail

/// Cross-correlation of x (N,C,H,W) with weights (F,C,k,k) plus bias (F).
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias,
                              const ConvGeometry& g) {
  if (x.rank() != 4 || weights.rank() != 4 || weights.dim(2) != weights.dim(3) || x.dim(1) != weights.dim(1)) {
    throw Error(Errc::ShapeMismatch, "conv2d: input " + shape_string(x.shape()) + " vs weights " +
                                         shape_string(weights.shape()));
  }
  require_shape(bias.shape(), {weights.dim(0)}, "conv2d bias");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index f = weights.dim(0), k = weights.dim(2);
  const Index oh = conv_output_size(h, k, g.stride, g.padding);
  const Index ow = conv_output_size(w, k, g.stride, g.padding);
  if (oh < 1 || ow < 1 || g.stride < 1 || g.padding >= k) {
    throw Error(Errc::ShapeMismatch, "conv2d: kernel " + std::to_string(k) + " does not fit input " +
                                         shape_string(x.shape()));
  }
  Tensor<Scalar> y({n, f, oh, ow});
  const Index plane = oh * ow;
  const Index chunk = detail::conv_chunk(n, plane);
  RowMatrix<Scalar> col(c * k * k, chunk * plane);
  RowMatrix<Scalar> out(f, chunk * plane);
  const auto wm = weights.matrix(f, c * k * k);
  const auto bv = bias.values();
  for (Index first = 0; first < n; first += chunk) {
    const Index m = std::min(chunk, n - first);
    for (Index j = 0; j < m; ++j) {
      detail::im2col(x.data() + (first + j) * c * h * w, c, h, w, k, g, oh, ow, col.data() + j * plane,
                     chunk * plane);
    }
    out.leftCols(m * plane).noalias() = wm * col.leftCols(m * plane);
    for (Index j = 0; j < m; ++j) {
      Eigen::Map<RowMatrix<Scalar>> yi(y.data() + (first + j) * f * plane, f, plane);
      yi = out.middleCols(j * plane, plane);
      yi.colwise() += bv;
    }
  }
  return y;
}

/// Accumulates into dweights/dbias; returns dx (skipped when want_input_grad is false).
template <typename Scalar>
Tensor<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights, const Tensor<Scalar>& dy,
                               const ConvGeometry& g, Eigen::Map<Vector<Scalar>> dweights,
                               Eigen::Map<Vector<Scalar>> dbias, bool want_input_grad = true) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index f = weights.dim(0), k = weights.dim(2);
  const Index oh = conv_output_size(h, k, g.stride, g.padding);
  const Index ow = conv_output_size(w, k, g.stride, g.padding);
  require_shape(dy.shape(), {n, f, oh, ow}, "conv2d backward dy");

  Tensor<Scalar> dx;
  if (want_input_grad) dx = Tensor<Scalar>(x.shape());
  const Index plane = oh * ow;
  const Index chunk = detail::conv_chunk(n, plane);
  RowMatrix<Scalar> col(c * k * k, chunk * plane);
  RowMatrix<Scalar> dyc(f, chunk * plane);
  RowMatrix<Scalar> dcol;
  const auto wm = weights.matrix(f, c * k * k);
  Eigen::Map<RowMatrix<Scalar>> dwm(dweights.data(), f, c * k * k);
  Eigen::VectorXd bias_acc = Eigen::VectorXd::Zero(f);
  for (Index first = 0; first < n; first += chunk) {
    const Index m = std::min(chunk, n - first);
    for (Index j = 0; j < m; ++j) {
      detail::im2col(x.data() + (first + j) * c * h * w, c, h, w, k, g, oh, ow, col.data() + j * plane,
                     chunk * plane);
      dyc.middleCols(j * plane, plane) =
          Eigen::Map<const RowMatrix<Scalar>>(dy.data() + (first + j) * f * plane, f, plane);
    }
    const auto dyb = dyc.leftCols(m * plane);
    dwm.noalias() += dyb * col.leftCols(m * plane).transpose();
    bias_acc += dyb.template cast<double>().rowwise().sum();
    if (want_input_grad) {
      dcol.noalias() = wm.transpose() * dyb;
      for (Index j = 0; j < m; ++j) {
        detail::col2im(dcol.data() + j * plane, c, h, w, k, g, oh, ow, dx.data() + (first + j) * c * h * w,
                       m * plane);
      }
    }
  }
  dbias += bias_acc.cast<Scalar>();
  return dx;
}

/// Max pooling without padding, floor-mode output size. `argmax` receives the flat
/// input index selected for every output element.
template <typename Scalar>
Tensor<Scalar> maxpool_forward(const Tensor<Scalar>& x, Index kernel, Index stride, std::vector<Index>& argmax) {
  if (x.rank() != 4) throw Error(Errc::ShapeMismatch, "maxpool expects NCHW input");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = conv_output_size(h, kernel, stride, 0);
  const Index ow = conv_output_size(w, kernel, stride, 0);
  if (oh < 1 || ow < 1) throw Error(Errc::ShapeMismatch, "maxpool window larger than input " + shape_string(x.shape()));
  Tensor<Scalar> y({n, c, oh, ow});
  argmax.assign(static_cast<std::size_t>(y.size()), 0);
  Index o = 0;
  for (Index p = 0; p < n * c; ++p) {
    const Index base = p * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox, ++o) {
        Index best = base + oy * stride * w + ox * stride;
        for (Index ky = 0; ky < kernel; ++ky) {
          for (Index kx = 0; kx < kernel; ++kx) {
            const Index idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> maxpool_backward(const Tensor<Scalar>& dy, const std::vector<Index>& argmax, const Shape& input_shape) {
  if (static_cast<std::size_t>(dy.size()) != argmax.size()) {
    throw Error(Errc::ShapeMismatch, "maxpool backward: gradient does not match forward pass");
  }
  Tensor<Scalar> dx(input_shape);
  for (Index o = 0; o < dy.size(); ++o) dx[argmax[static_cast<std::size_t>(o)]] += dy[o];
  return dx;
}

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.values() = x.values().cwiseMax(Scalar(0));
  return y;
}

/// Gradient passes where the forward input was strictly positive.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
  require_shape(dy.shape(), x.shape(), "relu backward");
  Tensor<Scalar> dx(x.shape());
  dx.values() = (x.values().array() > Scalar(0)).select(dy.values(), Scalar(0));
  return dx;
}

/// Inverted dropout: kept units are scaled by 1/(1-p). `mask` receives the per-element
/// multiplier (0 or 1/(1-p)).
template <typename Scalar, typename Rng>
Tensor<Scalar> dropout_forward(const Tensor<Scalar>& x, double p, Rng& rng, Tensor<Scalar>& mask) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(Errc::InvalidConfig, "dropout probability must lie in [0, 1)");
  mask = Tensor<Scalar>(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const Scalar scale = Scalar(1.0 / (1.0 - p));
  for (Index i = 0; i < x.size(); ++i) mask[i] = keep(rng) ? scale : Scalar(0);
  Tensor<Scalar> y(x.shape());
  y.values() = x.values().cwiseProduct(mask.values());
  return y;
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& mask) {
  require_shape(dy.shape(), mask.shape(), "dropout backward");
  Tensor<Scalar> dx(dy.shape());
  dx.values() = dy.values().cwiseProduct(mask.values());
  return dx;
}

/// y = x W^T + b with x (N,in), W (out,in), b (out).
template <typename Scalar>
Tensor<Scalar> fc_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(1)) {
    throw Error(Errc::ShapeMismatch, "fc: input " + shape_string(x.shape()) + " vs weights " +
                                         shape_string(weights.shape()));
  }
  require_shape(bias.shape(), {weights.dim(0)}, "fc bias");
  Tensor<Scalar> y({x.dim(0), weights.dim(0)});
  auto ym = y.as_matrix();
  ym.noalias() = x.as_matrix() * weights.as_matrix().transpose();
  ym.rowwise() += bias.values().transpose();
  return y;
}

template <typename Scalar>
Tensor<Scalar> fc_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights, const Tensor<Scalar>& dy,
                           Eigen::Map<Vector<Scalar>> dweights, Eigen::Map<Vector<Scalar>> dbias) {
  require_shape(dy.shape(), {x.dim(0), weights.dim(0)}, "fc backward dy");
  const auto dym = dy.as_matrix();
  Eigen::Map<RowMatrix<Scalar>> dwm(dweights.data(), weights.dim(0), weights.dim(1));
  dwm.noalias() += dym.transpose() * x.as_matrix();
  dbias += dym.template cast<double>().colwise().sum().transpose().template cast<Scalar>();
  Tensor<Scalar> dx(x.shape());
  dx.as_matrix().noalias() = dym * weights.as_matrix();
  return dx;
}

/// Concatenation of two (N, ...) tensors along axis 1 after flattening the trailing dims.
template <typename Scalar>
Tensor<Scalar> concat_forward(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.dim(0) != b.dim(0)) {
    throw Error(Errc::ShapeMismatch, "concat: " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  Shape shape = a.shape();
  for (Index i = 2; i < a.rank(); ++i) {
    if (b.rank() != a.rank() || b.dim(i) != a.dim(i)) {
      throw Error(Errc::ShapeMismatch, "concat: trailing dims differ");
    }
  }
  if (b.rank() != a.rank()) throw Error(Errc::ShapeMismatch, "concat: rank differs");
  shape[1] = a.dim(1) + b.dim(1);
  Tensor<Scalar> y(shape);
  const Index n = a.dim(0);
  const Index ra = a.size() / n, rb = b.size() / n;
  auto ym = y.matrix(n, ra + rb);
  ym.leftCols(ra) = a.matrix(n, ra);
  ym.rightCols(rb) = b.matrix(n, rb);
  return y;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> concat_backward(const Tensor<Scalar>& dy, const Shape& a_shape,
                                                          const Shape& b_shape) {
  Tensor<Scalar> da(a_shape), db(b_shape);
  const Index n = dy.dim(0);
  const Index ra = da.size() / n, rb = db.size() / n;
  const auto dym = dy.matrix(n, ra + rb);
  da.matrix(n, ra) = dym.leftCols(ra);
  db.matrix(n, rb) = dym.rightCols(rb);
  return {std::move(da), std::move(db)};
}

/// (N, ...) -> (N, prod(...)).
template <typename Scalar>
Tensor<Scalar> flatten_forward(const Tensor<Scalar>& x) {
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

template <typename Scalar>
Tensor<Scalar> flatten_backward(const Tensor<Scalar>& dy, const Shape& input_shape) {
  return dy.reshaped(input_shape);
}

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Tensor<Scalar> grad;
};

/// (1/(2N)) * sum ||pred_i - label_i||^2, gradient (pred - label)/N.
template <typename Scalar>
LossResult<Scalar> euclidean_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& label) {
  require_shape(label.shape(), pred.shape(), "euclidean loss");
  if (pred.rank() < 1 || pred.dim(0) < 1) throw Error(Errc::ShapeMismatch, "euclidean loss on empty batch");
  const double n = static_cast<double>(pred.dim(0));
  LossResult<Scalar> out;
  const Eigen::VectorXd diff = (pred.values().template cast<double>() - label.values().template cast<double>());
  out.loss = diff.squaredNorm() / (2.0 * n);
  out.grad = Tensor<Scalar>(pred.shape());
  out.grad.values() = (diff / n).template cast<Scalar>();
  return out;
}

}  // namespace deepvo::nn
