#pragma once

#include <cstddef>
#include <string>

#include "vmamba/feature_map.hpp"
#include "vmamba/ss2d.hpp"

namespace vmamba {

/// Pre-norm residual unit:
///   mid = SS2D(LN1(h)) + h
///   out = FFN(LN2(mid)) + mid,  FFN = Linear(C, rC) -> GELU -> Linear(rC, C)
/// Layer norms run over channels at each grid position.
struct VSSBlockWeights {
  Tensor ln1_gamma, ln1_beta;
  SS2DWeights ss2d;
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn_w1, ffn_b1;  // [C, rC], [rC]
  Tensor ffn_w2, ffn_b2;  // [rC, C], [C]

  std::size_t channels() const { return ln1_gamma.dim(0); }

  // Output projections of SS2D and the FFN start at zero unless
  // `zero_output` is false, so a fresh block is the identity.
  static VSSBlockWeights init(std::size_t channels, std::size_t state_dim, std::size_t ffn_ratio, Rng& rng,
                              bool zero_output = true);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

FeatureMap vss_forward(const FeatureMap& h, const VSSBlockWeights& block, const SS2DOptions& opts = {});
Tensor vss_tokens(const Tensor& tokens, std::size_t height, std::size_t width, const VSSBlockWeights& block,
                  const SS2DOptions& opts = {});

}  // namespace vmamba
