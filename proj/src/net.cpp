#include "deepvo/net.hpp"

#include <algorithm>

namespace deepvo {

std::string_view to_string(NetVariant v) {
  switch (v) {
    case NetVariant::TwoStreamRgb: return "TwoStreamRgb";
    case NetVariant::TwoStreamRgbFast: return "TwoStreamRgbFast";
    case NetVariant::PretrainedHead: return "PretrainedHead";
  }
  return "?";
}

NetVariant parse_net_variant(std::string_view name) {
  for (auto v : {NetVariant::TwoStreamRgb, NetVariant::TwoStreamRgbFast, NetVariant::PretrainedHead}) {
    if (to_string(v) == name) return v;
  }
  throw Error(Errc::InvalidConfig, "unknown network variant '" + std::string(name) + "'");
}

NetConfig NetConfig::two_stream(double width) {
  NetConfig c;
  c.width_multiplier = width;
  return c;
}

NetConfig NetConfig::fast_prior(double width) {
  NetConfig c;
  c.variant = NetVariant::TwoStreamRgbFast;
  c.input_channels = 4;
  c.width_multiplier = width;
  return c;
}

NetConfig NetConfig::pretrained_head(int channels, int size, double width) {
  NetConfig c;
  c.variant = NetVariant::PretrainedHead;
  c.input_channels = channels;
  c.input_height = size;
  c.input_width = size;
  c.width_multiplier = width;
  return c;
}

void NetConfig::validate() const {
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) {
    throw Error(Errc::InvalidConfig, "width multiplier must lie in (0, 1]");
  }
  if (input_channels < 1 || input_height < 1 || input_width < 1) {
    throw Error(Errc::InvalidConfig, "input dimensions must be positive");
  }
  if (variant == NetVariant::TwoStreamRgbFast && input_channels != 4) {
    throw Error(Errc::InvalidConfig, "the FAST-prior variant takes 4 input channels");
  }
  if (variant == NetVariant::TwoStreamRgb && input_channels != 3) {
    throw Error(Errc::InvalidConfig, "the RGB variant takes 3 input channels");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw Error(Errc::InvalidConfig, "dropout_p must lie in [0, 1)");
  if (!(conv_init_std > 0.0)) throw Error(Errc::InvalidConfig, "conv_init_std must be positive");
}

nn::Index NetConfig::scaled(nn::Index full) const {
  return std::max<nn::Index>(1, static_cast<nn::Index>(std::lround(static_cast<double>(full) * width_multiplier)));
}

void NetConfig::store(KeyValues& kv) const {
  kv.set("net.variant", std::string(to_string(variant)));
  kv.set("net.input_channels", input_channels);
  kv.set("net.input_height", input_height);
  kv.set("net.input_width", input_width);
  kv.set("net.width_multiplier", width_multiplier);
  kv.set("net.dropout_p", dropout_p);
  kv.set("net.shared_weights", shared_weights ? 1.0 : 0.0);
  kv.set("net.conv_init_std", conv_init_std);
}

NetConfig NetConfig::load(const KeyValues& kv) {
  NetConfig c;
  c.variant = parse_net_variant(kv.get_or("net.variant", "TwoStreamRgb"));
  if (c.variant == NetVariant::TwoStreamRgbFast) c.input_channels = 4;
  if (c.variant == NetVariant::PretrainedHead) c = pretrained_head();
  c.input_channels = static_cast<int>(kv.number_or("net.input_channels", c.input_channels));
  c.input_height = static_cast<int>(kv.number_or("net.input_height", c.input_height));
  c.input_width = static_cast<int>(kv.number_or("net.input_width", c.input_width));
  c.width_multiplier = kv.number_or("net.width_multiplier", c.width_multiplier);
  c.dropout_p = kv.number_or("net.dropout_p", c.dropout_p);
  c.shared_weights = kv.number_or("net.shared_weights", 0.0) != 0.0;
  c.conv_init_std = kv.number_or("net.conv_init_std", c.conv_init_std);
  c.validate();
  return c;
}

std::vector<nn::LayerSpec> alexnet_stream_specs() {
  using nn::LayerSpec;
  return {
      LayerSpec::conv(96, 11, 4, 0),  LayerSpec::relu(), LayerSpec::maxpool(3, 2),
      LayerSpec::conv(256, 5, 1, 2),  LayerSpec::relu(), LayerSpec::maxpool(3, 2),
      LayerSpec::conv(384, 3, 1, 1),  LayerSpec::relu(),
      LayerSpec::conv(384, 3, 1, 1),  LayerSpec::relu(),
      LayerSpec::conv(256, 3, 1, 1),  LayerSpec::relu(), LayerSpec::maxpool(3, 3),
      LayerSpec::flatten(),
  };
}

std::vector<nn::LayerSpec> regression_head_specs(double dropout_p) {
  using nn::LayerSpec;
  return {
      LayerSpec::fc(4096), LayerSpec::relu(), LayerSpec::dropout(dropout_p),
      LayerSpec::fc(1024), LayerSpec::relu(), LayerSpec::dropout(dropout_p),
      LayerSpec::fc(128),  LayerSpec::relu(),
      LayerSpec::fc(3),
  };
}

}  // namespace deepvo
