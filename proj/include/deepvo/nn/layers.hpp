#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepvo/nn/ops.hpp"

namespace deepvo::nn {

enum class LayerKind { Conv2d, MaxPool, ReLU, Dropout, FullyConnected, Concat, Flatten };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  Index kernel = 0;
  Index stride = 1;
  Index padding = 0;
  Index channels = 0;  // conv output channels
  Index units = 0;     // fully connected outputs
  double drop_probability = 0.5;
  Index axis = 1;  // concat

  void validate() const;

  static LayerSpec conv(Index channels, Index kernel, Index stride, Index padding) {
    return {LayerKind::Conv2d, kernel, stride, padding, channels};
  }
  static LayerSpec maxpool(Index kernel, Index stride) { return {LayerKind::MaxPool, kernel, stride}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec dropout(double p) {
    LayerSpec s{LayerKind::Dropout};
    s.drop_probability = p;
    return s;
  }
  static LayerSpec fc(Index units) {
    LayerSpec s{LayerKind::FullyConnected};
    s.units = units;
    return s;
  }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
};

inline void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::Conv2d:
      if (kernel < 1 || stride < 1 || channels < 1 || padding < 0 || padding >= kernel) {
        throw Error(Errc::InvalidConfig, "conv layer needs positive kernel/stride/channels and padding < kernel");
      }
      break;
    case LayerKind::MaxPool:
      if (kernel < 1 || stride < 1) throw Error(Errc::InvalidConfig, "pool layer needs positive kernel/stride");
      break;
    case LayerKind::Dropout:
      if (!(drop_probability >= 0.0 && drop_probability < 1.0)) {
        throw Error(Errc::InvalidConfig, "dropout probability must lie in [0, 1)");
      }
      break;
    case LayerKind::FullyConnected:
      if (units < 1) throw Error(Errc::InvalidConfig, "fully connected layer needs units >= 1");
      break;
    default:
      break;
  }
}

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv";
    case LayerKind::MaxPool: return "pool";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Concat: return "concat";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

/// Per-call execution state. Dropout draws from `rng` in training mode only.
struct RunMode {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

template <typename Scalar>
struct NamedParam {
  std::string name;
  Tensor<Scalar>* tensor = nullptr;
};

/// A layer caches whatever its backward pass needs from the latest forward call.
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode& mode) = 0;
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy) = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual std::vector<NamedParam<Scalar>> parameters() { return {}; }
  virtual const LayerSpec& spec() const = 0;
};

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(const LayerSpec& spec, Index in_channels) : spec_(spec) {
    spec_.validate();
    weight_ = Tensor<Scalar>({spec.channels, in_channels, spec.kernel, spec.kernel});
    bias_ = Tensor<Scalar>({spec.channels});
    weight_.ensure_grad();
    bias_.ensure_grad();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode&) override {
    input_ = x;
    return conv2d_forward(x, weight_, bias_, geometry());
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    return conv2d_backward(input_, weight_, dy, geometry(), weight_.grad(), bias_.grad(), input_grad_);
  }
  Shape output_shape(const Shape& in) const override {
    return {in[0], spec_.channels, conv_output_size(in[2], spec_.kernel, spec_.stride, spec_.padding),
            conv_output_size(in[3], spec_.kernel, spec_.stride, spec_.padding)};
  }
  std::vector<NamedParam<Scalar>> parameters() override { return {{"weight", &weight_}, {"bias", &bias_}}; }
  const LayerSpec& spec() const override { return spec_; }

  /// The first layer of a stream has no upstream consumer for dx.
  void set_input_grad(bool on) { input_grad_ = on; }

  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }

 private:
  ConvGeometry geometry() const { return {spec_.stride, spec_.padding}; }

  LayerSpec spec_;
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
  Tensor<Scalar> input_;
  bool input_grad_ = true;
};

template <typename Scalar>
class MaxPool final : public Layer<Scalar> {
 public:
  explicit MaxPool(const LayerSpec& spec) : spec_(spec) { spec_.validate(); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode&) override {
    input_shape_ = x.shape();
    return maxpool_forward(x, spec_.kernel, spec_.stride, argmax_);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    return maxpool_backward(dy, argmax_, input_shape_);
  }
  Shape output_shape(const Shape& in) const override {
    return {in[0], in[1], conv_output_size(in[2], spec_.kernel, spec_.stride, 0),
            conv_output_size(in[3], spec_.kernel, spec_.stride, 0)};
  }
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_;
  Shape input_shape_;
  std::vector<Index> argmax_;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
 public:
  ReLU() = default;
  Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode&) override {
    input_ = x;
    return relu_forward(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override { return relu_backward(input_, dy); }
  Shape output_shape(const Shape& in) const override { return in; }
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_ = LayerSpec::relu();
  Tensor<Scalar> input_;
};

/// Identity at inference; inverted-scaling mask during training.
template <typename Scalar>
class Dropout final : public Layer<Scalar> {
 public:
  explicit Dropout(const LayerSpec& spec) : spec_(spec) { spec_.validate(); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode& mode) override {
    active_ = mode.train && spec_.drop_probability > 0.0;
    if (!active_) return x;
    if (!mode.rng) throw Error(Errc::InvalidConfig, "training-mode dropout needs a random generator");
    return dropout_forward(x, spec_.drop_probability, *mode.rng, mask_);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    return active_ ? dropout_backward(dy, mask_) : dy;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_;
  Tensor<Scalar> mask_;
  bool active_ = false;
};

template <typename Scalar>
class FullyConnected final : public Layer<Scalar> {
 public:
  FullyConnected(const LayerSpec& spec, Index in_features) : spec_(spec) {
    spec_.validate();
    weight_ = Tensor<Scalar>({spec.units, in_features});
    bias_ = Tensor<Scalar>({spec.units});
    weight_.ensure_grad();
    bias_.ensure_grad();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode&) override {
    input_ = x;
    return fc_forward(x, weight_, bias_);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    return fc_backward(input_, weight_, dy, weight_.grad(), bias_.grad());
  }
  Shape output_shape(const Shape& in) const override { return {in[0], spec_.units}; }
  std::vector<NamedParam<Scalar>> parameters() override { return {{"weight", &weight_}, {"bias", &bias_}}; }
  const LayerSpec& spec() const override { return spec_; }

  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class Flatten final : public Layer<Scalar> {
 public:
  Flatten() = default;
  Tensor<Scalar> forward(const Tensor<Scalar>& x, const RunMode&) override {
    input_shape_ = x.shape();
    return flatten_forward(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override { return flatten_backward(dy, input_shape_); }
  Shape output_shape(const Shape& in) const override { return {in[0], shape_size(in) / in[0]}; }
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_ = LayerSpec::flatten();
  Shape input_shape_;
};

/// Builds a layer for a known input shape. Concat is a graph-level merge, not a layer.
template <typename Scalar>
std::unique_ptr<Layer<Scalar>> make_layer(const LayerSpec& spec, const Shape& input) {
  switch (spec.kind) {
    case LayerKind::Conv2d:
      if (input.size() != 4) throw Error(Errc::InvalidConfig, "conv layer after a flat tensor");
      return std::make_unique<Conv2d<Scalar>>(spec, input[1]);
    case LayerKind::MaxPool:
      if (input.size() != 4) throw Error(Errc::InvalidConfig, "pool layer after a flat tensor");
      return std::make_unique<MaxPool<Scalar>>(spec);
    case LayerKind::ReLU: return std::make_unique<ReLU<Scalar>>();
    case LayerKind::Dropout: return std::make_unique<Dropout<Scalar>>(spec);
    case LayerKind::FullyConnected:
      if (input.size() != 2) throw Error(Errc::InvalidConfig, "fully connected layer needs a flat input");
      return std::make_unique<FullyConnected<Scalar>>(spec, input[1]);
    case LayerKind::Flatten: return std::make_unique<Flatten<Scalar>>();
    case LayerKind::Concat: break;
  }
  throw Error(Errc::InvalidConfig, "concat cannot be instantiated as a single-input layer");
}

/// Ordered chain of layers.
template <typename Scalar>
class Sequential {
 public:
  Sequential() = default;
  Sequential(std::span<const LayerSpec> specs, Shape input) : input_shape_(input) {
    for (const auto& spec : specs) {
      layers_.push_back(make_layer<Scalar>(spec, input));
      input = layers_.back()->output_shape(input);
      if (shape_size(input) < 1) {
        throw Error(Errc::InvalidConfig, std::string(to_string(spec.kind)) + " layer yields empty output " +
                                             shape_string(input));
      }
      shapes_.push_back(input);
    }
  }

  Tensor<Scalar> forward(Tensor<Scalar> x, const RunMode& mode) {
    for (auto& layer : layers_) x = layer->forward(x, mode);
    return x;
  }
  Tensor<Scalar> backward(Tensor<Scalar> dy) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dy = (*it)->backward(dy);
    return dy;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<Scalar>& layer(std::size_t i) const { return *layers_[i]; }
  /// Output shape of layer i for the batch size given at construction.
  const Shape& shape_after(std::size_t i) const { return shapes_[i]; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.empty() ? input_shape_ : shapes_.back(); }

 private:
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
  std::vector<Shape> shapes_;
};

}  // namespace deepvo::nn
