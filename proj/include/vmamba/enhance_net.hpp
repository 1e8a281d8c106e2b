#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vmamba/feature_map.hpp"
#include "vmamba/layers.hpp"
#include "vmamba/ss2d.hpp"
#include "vmamba/vss_block.hpp"

namespace vmamba {

struct EnhanceNetConfig {
  std::size_t input_frames = 5;  // 2N + 1
  std::size_t base_channels = 16;
  std::vector<std::size_t> stage_depths{2, 2, 2};  // VSS blocks per encoder and per decoder stage
  std::size_t bottleneck_depth = 2;
  std::size_t num_scales = 3;
  std::size_t state_dim = 8;
  std::size_t ffn_ratio = 2;
  std::size_t pyramid_levels = 3;
  std::size_t deform_kernel = 3;
  ScanAlgorithm scan = ScanAlgorithm::kParallel;
  BbarMode bbar = BbarMode::kExact;

  void validate() const;
  std::size_t center_index() const { return input_frames / 2; }
  std::size_t stage_channels(std::size_t scale) const { return base_channels << scale; }
  SS2DOptions ss2d_options() const { return {scan, bbar}; }
};

struct EncoderStage {
  std::vector<VSSBlockWeights> blocks;
  ConvLayer down;  // 3x3 stride 2, C -> 2C
};

struct DecoderStage {
  UpsampleLayer up;   // 2x2 stride 2, 2C -> C
  ConvLayer reduce;   // 1x1, [up, skip] 2C -> C
  std::vector<VSSBlockWeights> blocks;
};

struct EnhanceNetWeights {
  ConvLayer embed;  // 1x1, frames * C0 -> C0
  std::vector<EncoderStage> encoder;
  std::vector<VSSBlockWeights> bottleneck;
  std::vector<DecoderStage> decoder;  // decoder[s] pairs with encoder[s]
  ConvLayer head;                     // 1x1, C0 -> 3, zero-initialized

  static EnhanceNetWeights init(const EnhanceNetConfig& cfg, Rng& rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

/// U-shaped VSS network over channel-concatenated aligned features.
/// Returns center_rgb + residual, [3, H, W]. Inputs whose sides are not
/// multiples of 2^S are reflect-padded and the result cropped back. In
/// inference mode the output is clamped to [0, 1].
Tensor enhance_forward(const std::vector<FeatureMap>& aligned, const Tensor& center_rgb, const EnhanceNetConfig& cfg,
                       const EnhanceNetWeights& w, bool inference);

}  // namespace vmamba
