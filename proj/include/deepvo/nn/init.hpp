#pragma once

#include <cmath>
#include <random>

#include "deepvo/nn/tensor.hpp"

namespace deepvo::nn {

/// Zero-mean normal samples.
template <typename Scalar, typename Rng>
void init_gaussian(Tensor<Scalar>& t, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
}

/// Fan sizes of a weight tensor: (out, in) for fully connected, (F, C, k, k) for conv.
inline std::pair<double, double> fan_in_out(const Shape& shape) {
  if (shape.size() < 2) throw Error(Errc::ShapeMismatch, "fan sizes need a rank >= 2 weight");
  double receptive = 1.0;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= static_cast<double>(shape[i]);
  return {static_cast<double>(shape[1]) * receptive, static_cast<double>(shape[0]) * receptive};
}

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename Scalar, typename Rng>
void init_xavier(Tensor<Scalar>& t, Rng& rng) {
  const auto [fan_in, fan_out] = fan_in_out(t.shape());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace deepvo::nn
