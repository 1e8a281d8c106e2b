#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmamba/alignment.hpp"
#include "vmamba/enhance_net.hpp"

namespace vmamba {

struct AlignmentWeights {
  FeatureExtractorWeights extractor;
  PyramidWeights pyramid;
  PcdWeights pcd;

  static AlignmentWeights init(const EnhanceNetConfig& cfg, Rng& rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Manifest stage label for a parameter name ("alignment", "encoder", ...).
std::string parameter_stage(const std::string& name);

/// Alignment followed by enhancement: every frame of a 2N+1 window is
/// aligned to the center frame, and the aligned features drive the U-net.
class VideoEnhancer {
 public:
  VideoEnhancer() = default;
  static VideoEnhancer init(const EnhanceNetConfig& cfg, std::uint64_t seed);

  const EnhanceNetConfig& config() const { return config_; }
  AlignmentWeights& alignment() { return alignment_; }
  const AlignmentWeights& alignment() const { return alignment_; }
  EnhanceNetWeights& enhance() { return enhance_; }
  const EnhanceNetWeights& enhance() const { return enhance_; }

  // Deterministic order; tensors alias the model's weights.
  std::vector<NamedParam> parameters();

  std::vector<FeatureMap> align_window(const std::vector<Tensor>& window) const;
  /// window: input_frames tensors [3, H, W] in temporal order.
  Tensor forward(const std::vector<Tensor>& window, bool inference) const;

 private:
  EnhanceNetConfig config_;
  AlignmentWeights alignment_;
  EnhanceNetWeights enhance_;
};

}  // namespace vmamba
