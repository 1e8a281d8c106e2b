#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vmamba/feature_map.hpp"
#include "vmamba/layers.hpp"

namespace vmamba {

/// Bilinear interpolation of every channel at continuous (y, x). Each of the
/// four surrounding grid points contributes only when it lies inside the
/// grid. `coords` is [2] = (y, x); differentiable in f and coords.
Tensor bilinear_sample(const FeatureMap& f, const Tensor& coords);
Tensor bilinear_sample(const FeatureMap& f, double y, double x);

/// Deformable convolution, stride 1, output the size of the input.
/// offsets is [2*k*k, H, W]: for tap t = ki*k + kj, channel 2t is the y
/// displacement and 2t+1 the x displacement added to the regular sampling
/// position (y + ki - (k-1)/2, x + kj - (k-1)/2). With all-zero offsets the
/// result is bitwise equal to conv2d(f, w, 1, (k-1)/2).
FeatureMap deformable_conv2d(const FeatureMap& f, const Tensor& offsets, const Tensor& w);

// Fine (index 0, full resolution) to coarse; each level halves (ceil) the previous.
struct FramePyramid {
  std::vector<FeatureMap> levels;

  std::size_t depth() const { return levels.size(); }
  const FeatureMap& operator[](std::size_t level) const { return levels.at(level); }
};

struct FeatureExtractorWeights {
  ConvLayer conv1;  // 3 -> C
  ConvLayer conv2;  // C -> C

  static FeatureExtractorWeights init(std::size_t in_channels, std::size_t channels, Rng& rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

struct PyramidWeights {
  std::vector<ConvLayer> down;  // stride-2 convs, one per coarser level

  static PyramidWeights init(std::size_t channels, std::size_t levels, Rng& rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

// Offsets at one pyramid level are predicted by
//   head(GELU(offset_conv([neighbor, reference, 2 * up(coarser offsets)])))
// and applied by a deformable convolution; `fuse` merges the result with the
// upsampled coarser aligned features. The coarsest level has no fuse layer
// and no coarser offsets.
struct PcdLevelWeights {
  ConvLayer offset_conv;
  ConvLayer offset_head;  // zero-initialized
  ConvLayer dcn;
  ConvLayer fuse;  // undefined at the coarsest level
};

struct PcdWeights {
  std::vector<PcdLevelWeights> levels;  // index 0 = finest
  PcdLevelWeights cascade;              // refines the level-0 result against the reference

  std::size_t kernel() const { return cascade.dcn.kernel(); }
  static PcdWeights init(std::size_t channels, std::size_t levels, std::size_t kernel, Rng& rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

FeatureMap extract_features(const Tensor& rgb, const FeatureExtractorWeights& w);
FramePyramid build_pyramid(const FeatureMap& features, const PyramidWeights& w);

/// Coarse-to-fine deformable alignment of `neighbor` onto `reference`.
/// Returns a map at level-0 resolution. Offsets are clamped to
/// +-max(H, W) of their level.
FeatureMap pcd_align(const FramePyramid& neighbor, const FramePyramid& reference, const PcdWeights& w);

}  // namespace vmamba
