#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "deepvo/keyvalue.hpp"
#include "deepvo/nn/checkpoint.hpp"
#include "deepvo/nn/init.hpp"
#include "deepvo/nn/layers.hpp"

namespace deepvo {

enum class NetVariant { TwoStreamRgb, TwoStreamRgbFast, PretrainedHead };

std::string_view to_string(NetVariant v);
NetVariant parse_net_variant(std::string_view name);

struct NetConfig {
  NetVariant variant = NetVariant::TwoStreamRgb;
  int input_channels = 3;
  int input_height = 256;
  int input_width = 256;
  double width_multiplier = 1.0;
  double dropout_p = 0.5;
  bool shared_weights = false;
  double conv_init_std = 0.01;
  /// Replaces the per-stream conv stack (used for small-input gradient checks).
  std::optional<std::vector<nn::LayerSpec>> stream_override;

  static NetConfig two_stream(double width = 1.0);
  static NetConfig fast_prior(double width = 1.0);
  /// Activations of shape (channels, size, size) per frame.
  static NetConfig pretrained_head(int channels = 256, int size = 6, double width = 1.0);

  void validate() const;
  /// Channel or unit count after the width multiplier, never below 1.
  nn::Index scaled(nn::Index full) const;

  void store(KeyValues& kv) const;
  static NetConfig load(const KeyValues& kv);
};

/// Conv stack of one stream at full width: five AlexNet-style convolutions with a final
/// 3x3/3 pool, giving 256x4x4 = 4096 features for a 256x256 input.
std::vector<nn::LayerSpec> alexnet_stream_specs();
/// Fully connected ladder after the merge, ending in 3 outputs.
std::vector<nn::LayerSpec> regression_head_specs(double dropout_p);

/// Two input branches, a feature concatenation, and a trunk regressing (dx, dz, dtheta).
template <typename Scalar>
class ModelGraph {
 public:
  using TensorT = nn::Tensor<Scalar>;

  ModelGraph(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const nn::Shape in{1, cfg_.input_channels, cfg_.input_height, cfg_.input_width};
    std::vector<nn::LayerSpec> stream_specs;
    std::vector<nn::LayerSpec> trunk_specs;
    if (cfg_.variant == NetVariant::PretrainedHead) {
      trunk_specs.push_back(nn::LayerSpec::conv(cfg_.scaled(256), 3, 1, 1));
      trunk_specs.push_back(nn::LayerSpec::relu());
      trunk_specs.push_back(nn::LayerSpec::flatten());
    } else {
      stream_specs = cfg_.stream_override.value_or(alexnet_stream_specs());
      for (auto& s : stream_specs) {
        if (s.kind == nn::LayerKind::Conv2d) s.channels = cfg_.scaled(s.channels);
      }
      if (stream_specs.empty() || stream_specs.back().kind != nn::LayerKind::Flatten) {
        stream_specs.push_back(nn::LayerSpec::flatten());
      }
    }
    for (auto s : regression_head_specs(cfg_.dropout_p)) {
      if (s.kind == nn::LayerKind::FullyConnected && s.units != 3) s.units = cfg_.scaled(s.units);
      trunk_specs.push_back(s);
    }

    stream_a_ = nn::Sequential<Scalar>(stream_specs, in);
    if (!cfg_.shared_weights) stream_b_ = nn::Sequential<Scalar>(stream_specs, in);
    nn::Shape merged = stream_a_.output_shape();
    merged[1] *= 2;
    if (cfg_.variant == NetVariant::PretrainedHead) merged = {1, 2 * cfg_.input_channels, cfg_.input_height, cfg_.input_width};
    trunk_ = nn::Sequential<Scalar>(trunk_specs, merged);

    disable_first_input_grad(stream_a_);
    disable_first_input_grad(stream_b_);
    name_parameters();
    initialize(seed);
  }

  const NetConfig& config() const { return cfg_; }

  /// (N,3) prediction. Dropout is active only when mode.train is set.
  TensorT forward(const TensorT& img_a, const TensorT& img_b, const nn::RunMode& mode) {
    check_input(img_a);
    check_input(img_b);
    if (img_a.dim(0) != img_b.dim(0)) throw Error(Errc::ShapeMismatch, "input batches differ in size");
    batch_ = img_a.dim(0);
    TensorT fa, fb;
    if (cfg_.shared_weights && stream_a_.size() > 0) {
      // One pass over the stacked batch keeps a single backward cache.
      const TensorT both = stack_batches(img_a, img_b);
      const TensorT f = stream_a_.forward(both, mode);
      fa = take_rows(f, 0, batch_);
      fb = take_rows(f, batch_, batch_);
    } else {
      fa = stream_a_.forward(img_a, mode);
      fb = stream_b_.forward(img_b, mode);
    }
    feature_a_shape_ = fa.shape();
    feature_b_shape_ = fb.shape();
    return trunk_.forward(nn::concat_forward(fa, fb), mode);
  }

  /// Accumulates parameter gradients for the last forward call.
  void backward(const TensorT& dy) {
    const TensorT dmerged = trunk_.backward(dy);
    auto [da, db] = nn::concat_backward(dmerged, feature_a_shape_, feature_b_shape_);
    if (cfg_.shared_weights && stream_a_.size() > 0) {
      stream_a_.backward(stack_batches(da, db));
    } else {
      stream_a_.backward(std::move(da));
      stream_b_.backward(std::move(db));
    }
  }

  std::vector<nn::NamedParam<Scalar>> parameters() { return params_; }

  std::vector<TensorT*> parameter_tensors() {
    std::vector<TensorT*> out;
    for (auto& p : params_) out.push_back(p.tensor);
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor->size());
    return n;
  }

  /// Flattened feature width of one stream (for PretrainedHead, one activation tensor).
  nn::Index stream_feature_width() const {
    const auto& s = stream_a_.output_shape();
    return nn::shape_size(s) / s[0];
  }
  nn::Index merged_width() const { return 2 * stream_feature_width(); }
  nn::Index output_width() const { return trunk_.output_shape()[1]; }

  const nn::Sequential<Scalar>& stream_a() const { return stream_a_; }
  const nn::Sequential<Scalar>& trunk() const { return trunk_; }

  void save_parameters(nn::Checkpoint& ckpt) {
    for (auto& p : params_) ckpt.put(p.name, p.tensor->template cast<float>());
  }

  void load_parameters(const nn::Checkpoint& ckpt) {
    for (auto& p : params_) {
      const auto* t = ckpt.find(p.name);
      if (!t) throw Error(Errc::ShapeMismatch, "checkpoint lacks parameter " + p.name);
      nn::require_shape(t->shape(), p.tensor->shape(), p.name.c_str());
      p.tensor->values() = t->values().template cast<Scalar>();
    }
  }

 private:
  void check_input(const TensorT& x) const {
    if (x.rank() != 4) throw Error(Errc::ShapeMismatch, "inputs must be NCHW, got " + nn::shape_string(x.shape()));
    if (x.dim(1) != cfg_.input_channels) {
      throw Error(Errc::ChannelMismatch, "network expects " + std::to_string(cfg_.input_channels) +
                                             " channels, got " + std::to_string(x.dim(1)));
    }
    if (x.dim(2) != cfg_.input_height || x.dim(3) != cfg_.input_width) {
      throw Error(Errc::ShapeMismatch, "network expects " + std::to_string(cfg_.input_height) + "x" +
                                           std::to_string(cfg_.input_width) + " inputs, got " +
                                           nn::shape_string(x.shape()));
    }
  }

  static TensorT stack_batches(const TensorT& a, const TensorT& b) {
    nn::Shape shape = a.shape();
    shape[0] += b.dim(0);
    TensorT out(shape);
    std::copy_n(a.data(), a.size(), out.data());
    std::copy_n(b.data(), b.size(), out.data() + a.size());
    return out;
  }

  static TensorT take_rows(const TensorT& t, nn::Index first, nn::Index count) {
    nn::Shape shape = t.shape();
    shape[0] = count;
    TensorT out(shape);
    const nn::Index row = t.size() / t.dim(0);
    std::copy_n(t.data() + first * row, count * row, out.data());
    return out;
  }

  static void disable_first_input_grad(nn::Sequential<Scalar>& seq) {
    if (seq.size() == 0) return;
    if (auto* conv = dynamic_cast<nn::Conv2d<Scalar>*>(&seq.layer(0))) conv->set_input_grad(false);
  }

  void collect(nn::Sequential<Scalar>& seq, const std::string& prefix) {
    int conv = 0, fc = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      auto& layer = seq.layer(i);
      std::string lname;
      if (layer.spec().kind == nn::LayerKind::Conv2d) lname = "conv" + std::to_string(++conv);
      else if (layer.spec().kind == nn::LayerKind::FullyConnected) lname = "fc" + std::to_string(++fc);
      for (auto& p : layer.parameters()) params_.push_back({prefix + "." + lname + "." + p.name, p.tensor});
    }
  }

  void name_parameters() {
    params_.clear();
    collect(stream_a_, cfg_.shared_weights ? "stream" : "stream_a");
    if (!cfg_.shared_weights) collect(stream_b_, "stream_b");
    collect(trunk_, "head");
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      const bool is_weight = p.name.ends_with(".weight");
      if (!is_weight) {
        p.tensor->set_zero();
      } else if (p.tensor->rank() == 4) {
        nn::init_gaussian(*p.tensor, cfg_.conv_init_std, rng);
      } else {
        nn::init_xavier(*p.tensor, rng);
      }
    }
  }

  NetConfig cfg_;
  nn::Sequential<Scalar> stream_a_;
  nn::Sequential<Scalar> stream_b_;
  nn::Sequential<Scalar> trunk_;
  std::vector<nn::NamedParam<Scalar>> params_;
  nn::Shape feature_a_shape_;
  nn::Shape feature_b_shape_;
  nn::Index batch_ = 0;
};

}  // namespace deepvo
