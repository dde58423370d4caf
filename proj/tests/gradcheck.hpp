#pragma once

#include <random>
#include <string>
#include <vector>

#include "deepvo/net.hpp"
#include "deepvo/nn/init.hpp"
#include "deepvo/nn/layers.hpp"
#include "deepvo/nn/ops.hpp"
#include "support.hpp"

namespace deepvo::testing {

struct GradCheck {
  std::string name;
  int draws = 0;
  double worst = 0.0;
};

namespace detail {

inline nn::Index pick(std::mt19937_64& rng, nn::Index lo, nn::Index hi) {
  return std::uniform_int_distribution<nn::Index>(lo, hi)(rng);
}

/// Checks dL/dx and dL/dparams of one layer for L = sum(r * layer(x)), with a fixed
/// dropout stream so the function is deterministic.
inline double check_layer(nn::Layer<double>& layer, nn::Tensor<double> x, bool train, std::mt19937_64& rng) {
  const nn::Shape out_shape = layer.output_shape(x.shape());
  nn::Tensor<double> r(out_shape);
  fill_normal(r, rng);
  const std::uint64_t mask_seed = rng();
  auto run = [&](const nn::Tensor<double>& in) {
    std::mt19937_64 mask_rng(mask_seed);
    return layer.forward(in, nn::RunMode{train, &mask_rng});
  };
  auto loss = [&]() { return run(x).values().dot(r.values()); };

  for (auto& p : layer.parameters()) p.tensor->zero_grad();
  run(x);
  const nn::Tensor<double> dx = layer.backward(r);
  double worst = check_entries(x, all_entries(x), loss, [&](nn::Index i) { return dx[i]; });
  for (auto& p : layer.parameters()) {
    const nn::Tensor<double> grad = [&] {
      nn::Tensor<double> g(p.tensor->shape());
      g.values() = p.tensor->grad();
      return g;
    }();
    worst = std::max(worst, check_entries(*p.tensor, all_entries(*p.tensor), loss,
                                          [&](nn::Index i) { return grad[i]; }));
  }
  return worst;
}

}  // namespace detail

/// `draws` random shape/seed draws for every layer kind, the concat merge, and the loss.
inline std::vector<GradCheck> layer_gradient_checks(int draws, std::uint64_t seed) {
  using detail::pick;
  std::mt19937_64 rng(seed);
  std::vector<GradCheck> out;
  auto record = [&](const std::string& name, auto&& one) {
    GradCheck g{name, draws, 0.0};
    for (int d = 0; d < draws; ++d) g.worst = std::max(g.worst, one());
    out.push_back(g);
  };

  record("conv2d", [&] {
    const nn::Index k = pick(rng, 1, 3), s = pick(rng, 1, 2), p = pick(rng, 0, k - 1);
    const nn::Index h = pick(rng, k, 7), w = pick(rng, k, 7);
    nn::Tensor<double> x({pick(rng, 1, 2), pick(rng, 1, 3), h, w});
    fill_normal(x, rng);
    auto layer = nn::make_layer<double>(nn::LayerSpec::conv(pick(rng, 1, 4), k, s, p), x.shape());
    for (auto& prm : layer->parameters()) fill_normal(*prm.tensor, rng, 0.5);
    return detail::check_layer(*layer, x, false, rng);
  });
  record("maxpool", [&] {
    const nn::Index k = pick(rng, 2, 3), s = pick(rng, 1, 3);
    nn::Tensor<double> x({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, k, 8), pick(rng, k, 8)});
    fill_distinct(x, rng);
    auto layer = nn::make_layer<double>(nn::LayerSpec::maxpool(k, s), x.shape());
    return detail::check_layer(*layer, x, false, rng);
  });
  record("relu", [&] {
    nn::Tensor<double> x({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5)});
    fill_away_from_zero(x, rng);
    auto layer = nn::make_layer<double>(nn::LayerSpec::relu(), x.shape());
    return detail::check_layer(*layer, x, false, rng);
  });
  record("dropout", [&] {
    nn::Tensor<double> x({pick(rng, 1, 3), pick(rng, 2, 40)});
    fill_normal(x, rng);
    const double prob = std::uniform_real_distribution<double>(0.1, 0.7)(rng);
    auto layer = nn::make_layer<double>(nn::LayerSpec::dropout(prob), x.shape());
    return detail::check_layer(*layer, x, true, rng);
  });
  record("fully_connected", [&] {
    nn::Tensor<double> x({pick(rng, 1, 3), pick(rng, 1, 8)});
    fill_normal(x, rng);
    auto layer = nn::make_layer<double>(nn::LayerSpec::fc(pick(rng, 1, 6)), x.shape());
    for (auto& prm : layer->parameters()) fill_normal(*prm.tensor, rng, 0.5);
    return detail::check_layer(*layer, x, false, rng);
  });
  record("flatten", [&] {
    nn::Tensor<double> x({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)});
    fill_normal(x, rng);
    auto layer = nn::make_layer<double>(nn::LayerSpec::flatten(), x.shape());
    return detail::check_layer(*layer, x, false, rng);
  });
  record("concat", [&] {
    const nn::Index n = pick(rng, 1, 3);
    nn::Tensor<double> a({n, pick(rng, 1, 6)}), b({n, pick(rng, 1, 6)});
    fill_normal(a, rng);
    fill_normal(b, rng);
    nn::Tensor<double> r({n, a.dim(1) + b.dim(1)});
    fill_normal(r, rng);
    auto loss = [&] { return nn::concat_forward(a, b).values().dot(r.values()); };
    const auto [da, db] = nn::concat_backward(r, a.shape(), b.shape());
    return std::max(check_entries(a, all_entries(a), loss, [&](nn::Index i) { return da[i]; }),
                    check_entries(b, all_entries(b), loss, [&](nn::Index i) { return db[i]; }));
  });
  record("euclidean_loss", [&] {
    nn::Tensor<double> pred({pick(rng, 1, 5), 3}), label(pred.shape());
    fill_normal(pred, rng);
    fill_normal(label, rng);
    const auto grad = nn::euclidean_loss(pred, label).grad;
    auto loss = [&] { return nn::euclidean_loss(pred, label).loss; };
    return check_entries(pred, all_entries(pred), loss, [&](nn::Index i) { return grad[i]; });
  });
  return out;
}

/// Per-stream stack of the full network with strides and pools shrunk for 8x8 inputs.
inline std::vector<nn::LayerSpec> shrunk_stream_specs() {
  using nn::LayerSpec;
  return {LayerSpec::conv(96, 3, 1, 1),  LayerSpec::relu(), LayerSpec::maxpool(2, 2), LayerSpec::conv(256, 3, 1, 1),
          LayerSpec::relu(),             LayerSpec::maxpool(2, 2), LayerSpec::conv(384, 3, 1, 1), LayerSpec::relu(),
          LayerSpec::conv(384, 3, 1, 1), LayerSpec::relu(),        LayerSpec::conv(256, 3, 1, 1), LayerSpec::relu(),
          LayerSpec::maxpool(2, 2),      LayerSpec::flatten()};
}

/// Width-0.125 two-stream graph on 8x8 inputs, training mode with a fixed dropout stream.
/// Checks `per_tensor` random entries of every parameter tensor. eps is far below the
/// per-layer 1e-3: a parameter step moves thousands of downstream relu and pool inputs,
/// and at 1e-3 one of them usually crosses its switch point.
inline GradCheck full_graph_gradient_check(std::uint64_t seed, std::size_t per_tensor, bool shared = false,
                                           double eps = 1e-6) {
  NetConfig cfg = NetConfig::two_stream(0.125);
  cfg.input_height = cfg.input_width = 8;
  cfg.stream_override = shrunk_stream_specs();
  cfg.shared_weights = shared;
  ModelGraph<double> g(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  // Fan-in scaled weights and small random biases keep every activation O(1), so the
  // loss is smooth at the scale of eps and relu kinks are rarely straddled.
  for (auto& p : g.parameters()) {
    if (p.tensor->rank() >= 2) {
      fill_normal(*p.tensor, rng, std::sqrt(2.0 / nn::fan_in_out(p.tensor->shape()).first));
    } else {
      fill_normal(*p.tensor, rng, 0.1);
    }
  }
  nn::Tensor<double> a({2, 3, 8, 8}), b({2, 3, 8, 8}), y({2, 3});
  fill_normal(a, rng);
  fill_normal(b, rng);
  fill_normal(y, rng);
  const std::uint64_t mask_seed = rng();
  auto forward = [&] {
    std::mt19937_64 mask_rng(mask_seed);
    return g.forward(a, b, nn::RunMode{true, &mask_rng});
  };
  auto loss = [&] { return nn::euclidean_loss(forward(), y).loss; };
  g.zero_grad();
  g.backward(nn::euclidean_loss(forward(), y).grad);
  GradCheck result{shared ? "two_stream_graph_shared" : "two_stream_graph", 1, 0.0};
  for (auto& p : g.parameters()) {
    nn::Tensor<double> grad(p.tensor->shape());
    grad.values() = p.tensor->grad();
    const auto entries = sample_entries(*p.tensor, per_tensor, rng);
    result.worst =
        std::max(result.worst, check_entries(*p.tensor, entries, loss, [&](nn::Index i) { return grad[i]; }, eps));
  }
  return result;
}

}  // namespace deepvo::testing
