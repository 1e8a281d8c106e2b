#pragma once

#include <cstddef>
#include <string>

#include "vmamba/module.hpp"
#include "vmamba/tensor.hpp"

namespace vmamba {

// Square-kernel convolution with per-channel bias, "same"-style padding (k-1)/2.
struct ConvLayer {
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout]

  static ConvLayer init(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng,
                        bool zero = false);
  Tensor forward(const Tensor& x, std::size_t stride = 1) const;
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

// Transposed convolution with kernel == stride (non-overlapping upsampling).
struct UpsampleLayer {
  Tensor weight;  // [Cin, Cout, s, s]
  Tensor bias;    // [Cout]

  static UpsampleLayer init(std::size_t out_channels, std::size_t in_channels, std::size_t factor, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

}  // namespace vmamba
