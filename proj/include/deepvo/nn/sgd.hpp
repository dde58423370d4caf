#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "deepvo/keyvalue.hpp"
#include "deepvo/nn/tensor.hpp"

namespace deepvo::nn {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double decay_factor = 0.1;
  long decay_interval = 10000;  // iterations

  void validate() const {
    if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || weight_decay < 0.0 ||
        decay_factor <= 0.0 || decay_interval < 1) {
      throw Error(Errc::InvalidConfig, "SGD requires lr > 0, momentum in [0,1), decay interval >= 1");
    }
  }

  /// Step-decayed rate at a given iteration.
  double rate_at(long iteration) const {
    return learning_rate * std::pow(decay_factor, static_cast<double>(iteration / decay_interval));
  }

  void store(KeyValues& kv) const {
    kv.set("sgd.learning_rate", learning_rate);
    kv.set("sgd.momentum", momentum);
    kv.set("sgd.weight_decay", weight_decay);
    kv.set("sgd.decay_factor", decay_factor);
    kv.set("sgd.decay_interval", static_cast<double>(decay_interval));
  }
  static SgdConfig load(const KeyValues& kv) {
    SgdConfig c;
    c.learning_rate = kv.number_or("sgd.learning_rate", c.learning_rate);
    c.momentum = kv.number_or("sgd.momentum", c.momentum);
    c.weight_decay = kv.number_or("sgd.weight_decay", c.weight_decay);
    c.decay_factor = kv.number_or("sgd.decay_factor", c.decay_factor);
    c.decay_interval = static_cast<long>(kv.number_or("sgd.decay_interval", static_cast<double>(c.decay_interval)));
    return c;
  }
};

/// Momentum buffers, one per parameter tensor, same order as the parameter list.
template <typename Scalar>
struct SgdState {
  std::vector<Vector<Scalar>> velocity;
};

/// v <- momentum*v - lr*(g + weight_decay*w); w <- w + v. Parameters carry their own grad buffers.
template <typename Scalar>
void sgd_step(std::span<Tensor<Scalar>* const> params, SgdState<Scalar>& state, const SgdConfig& cfg,
              long iteration) {
  if (state.velocity.empty()) {
    for (auto* p : params) state.velocity.push_back(Vector<Scalar>::Zero(p->size()));
  }
  if (state.velocity.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer state does not match parameter list");
  }
  const auto lr = static_cast<Scalar>(cfg.rate_at(iteration));
  const auto mu = static_cast<Scalar>(cfg.momentum);
  const auto wd = static_cast<Scalar>(cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& v = state.velocity[i];
    if (v.size() != p.size()) throw Error(Errc::ShapeMismatch, "velocity size differs from parameter");
    const auto g = p.grad();
    v = mu * v - lr * (g + wd * p.values());
    p.values() += v;
  }
}

}  // namespace deepvo::nn
