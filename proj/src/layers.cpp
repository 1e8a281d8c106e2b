#include "vmamba/layers.hpp"

#include "vmamba/ops.hpp"

namespace vmamba {

ConvLayer ConvLayer::init(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng,
                          bool zero) {
  ConvLayer layer;
  Shape shape{out_channels, in_channels, kernel, kernel};
  layer.weight = zero ? constant_param(shape, 0.0) : fan_in_param(shape, in_channels * kernel * kernel, rng);
  layer.bias = constant_param({out_channels}, 0.0);
  return layer;
}

Tensor ConvLayer::forward(const Tensor& x, std::size_t stride) const {
  return add_channel_bias(conv2d(x, weight, stride, (kernel() - 1) / 2), bias);
}

void ConvLayer::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "weight", weight);
  visit(prefix + "bias", bias);
}

UpsampleLayer UpsampleLayer::init(std::size_t out_channels, std::size_t in_channels, std::size_t factor, Rng& rng) {
  UpsampleLayer layer;
  layer.weight = fan_in_param({in_channels, out_channels, factor, factor}, in_channels, rng);
  layer.bias = constant_param({out_channels}, 0.0);
  return layer;
}

Tensor UpsampleLayer::forward(const Tensor& x) const {
  return add_channel_bias(conv_transpose2d(x, weight, weight.dim(2)), bias);
}

void UpsampleLayer::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "weight", weight);
  visit(prefix + "bias", bias);
}

}  // namespace vmamba
