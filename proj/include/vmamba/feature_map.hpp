#pragma once

#include <cstddef>

#include "vmamba/tensor.hpp"

namespace vmamba {

// A channel-first grid of features, values [C, H, W].
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(Tensor values);

  const Tensor& values() const { return values_; }
  std::size_t channels() const { return values_.dim(0); }
  std::size_t height() const { return values_.dim(1); }
  std::size_t width() const { return values_.dim(2); }
  bool same_shape(const FeatureMap& other) const { return values_.shape() == other.values_.shape(); }

  // [H*W, C] row-major token grid and its inverse.
  Tensor to_tokens() const;
  static FeatureMap from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

 private:
  Tensor values_;
};

}  // namespace vmamba
