#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vmamba/feature_map.hpp"
#include "vmamba/module.hpp"
#include "vmamba/ssm.hpp"

namespace vmamba {

enum class Direction { kLeftRight = 0, kTopDown = 1, kRightLeft = 2, kDownTop = 3 };
inline constexpr std::array<Direction, 4> kAllDirections = {Direction::kLeftRight, Direction::kTopDown,
                                                            Direction::kRightLeft, Direction::kDownTop};
const char* to_string(Direction dir);

/// Grid positions (row-major index y*W + x) in visiting order. LR is
/// row-major, TD column-major scanning columns left to right, RL and DT are
/// their reversals.
std::vector<std::size_t> traversal_order(Direction dir, std::size_t height, std::size_t width);

struct DirectionalSequences {
  std::array<Tensor, 4> sequences;  // each [H*W, C], indexed by Direction
  std::size_t height = 0;
  std::size_t width = 0;

  const Tensor& operator[](Direction dir) const { return sequences[static_cast<std::size_t>(dir)]; }
  Tensor& operator[](Direction dir) { return sequences[static_cast<std::size_t>(dir)]; }
};

DirectionalSequences cross_scan(const FeatureMap& f);
DirectionalSequences cross_scan_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

// Scatter each sequence back to the grid and sum the four grids.
FeatureMap cross_merge(const DirectionalSequences& seqs);
Tensor cross_merge_tokens(const DirectionalSequences& seqs);

struct SS2DOptions {
  ScanAlgorithm algorithm = ScanAlgorithm::kParallel;
  BbarMode bbar = BbarMode::kExact;
};

/// One selective head per direction; A (as log-magnitudes, A = -exp(a_log))
/// and the skip D are shared per channel. The merged grid passes through a
/// C x C output projection.
struct SS2DWeights {
  Tensor a_log;  // [C, d]
  Tensor d_skip;  // [C]
  std::array<SelectiveHead, 4> heads;
  Tensor out_w;  // [C, C]
  Tensor out_b;  // [C]

  std::size_t channels() const { return d_skip.dim(0); }
  std::size_t state_dim() const { return a_log.dim(1); }

  static SS2DWeights init(std::size_t channels, std::size_t state_dim, Rng& rng, bool zero_output = true);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

FeatureMap ss2d_forward(const FeatureMap& f, const SS2DWeights& w, const SS2DOptions& opts = {});
// Same, on an [H*W, C] token grid.
Tensor ss2d_tokens(const Tensor& tokens, std::size_t height, std::size_t width, const SS2DWeights& w,
                   const SS2DOptions& opts = {});

}  // namespace vmamba
