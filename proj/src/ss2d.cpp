#include "vmamba/ss2d.hpp"

#include <algorithm>

#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"

namespace vmamba {

FeatureMap::FeatureMap(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 3) throw DimensionError("FeatureMap: expected [C,H,W], got " + shape_to_string(values_.shape()));
}

Tensor FeatureMap::to_tokens() const {
  return transpose(values_.reshape({channels(), height() * width()}));
}

FeatureMap FeatureMap::from_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
  if (tokens.rank() != 2 || tokens.dim(0) != height * width) {
    throw DimensionError("FeatureMap::from_tokens: " + shape_to_string(tokens.shape()) + " is not a " +
                         std::to_string(height) + "x" + std::to_string(width) + " token grid");
  }
  return FeatureMap(transpose(tokens).reshape({tokens.dim(1), height, width}));
}

const char* to_string(Direction dir) {
  switch (dir) {
    case Direction::kLeftRight: return "LR";
    case Direction::kTopDown: return "TD";
    case Direction::kRightLeft: return "RL";
    case Direction::kDownTop: return "DT";
  }
  return "?";
}

std::vector<std::size_t> traversal_order(Direction dir, std::size_t height, std::size_t width) {
  std::vector<std::size_t> order;
  order.reserve(height * width);
  const bool column_major = dir == Direction::kTopDown || dir == Direction::kDownTop;
  if (column_major) {
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t y = 0; y < height; ++y) order.push_back(y * width + x);
  } else {
    for (std::size_t i = 0; i < height * width; ++i) order.push_back(i);
  }
  if (dir == Direction::kRightLeft || dir == Direction::kDownTop) std::reverse(order.begin(), order.end());
  return order;
}

DirectionalSequences cross_scan_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
  if (tokens.rank() != 2 || tokens.dim(0) != height * width) {
    throw DimensionError("cross_scan: token grid " + shape_to_string(tokens.shape()) + " does not match " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  DirectionalSequences out;
  out.height = height;
  out.width = width;
  for (auto dir : kAllDirections) out[dir] = gather_rows(tokens, traversal_order(dir, height, width));
  return out;
}

DirectionalSequences cross_scan(const FeatureMap& f) {
  return cross_scan_tokens(f.to_tokens(), f.height(), f.width());
}

Tensor cross_merge_tokens(const DirectionalSequences& seqs) {
  const std::size_t cells = seqs.height * seqs.width;
  Tensor total;
  for (auto dir : kAllDirections) {
    const Tensor& s = seqs[dir];
    if (!s.defined() || s.rank() != 2 || s.dim(0) != cells) {
      throw DimensionError(std::string("cross_merge: ") + to_string(dir) + " sequence must have length " +
                           std::to_string(cells));
    }
    auto grid = scatter_add_rows(s, traversal_order(dir, seqs.height, seqs.width), cells);
    total = total.defined() ? add(total, grid) : grid;
  }
  return total;
}

FeatureMap cross_merge(const DirectionalSequences& seqs) {
  return FeatureMap::from_tokens(cross_merge_tokens(seqs), seqs.height, seqs.width);
}

SS2DWeights SS2DWeights::init(std::size_t channels, std::size_t state_dim, Rng& rng, bool zero_output) {
  SS2DWeights w;
  w.a_log = init_a_log(channels, state_dim, rng);
  w.d_skip = constant_param({channels}, 1.0);
  for (auto& head : w.heads) head = SelectiveHead::init(channels, state_dim, rng);
  w.out_w = zero_output ? constant_param({channels, channels}, 0.0) : fan_in_param({channels, channels}, channels, rng);
  w.out_b = constant_param({channels}, 0.0);
  return w;
}

void SS2DWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "a_log", a_log);
  visit(prefix + "d_skip", d_skip);
  for (auto dir : kAllDirections) {
    heads[static_cast<std::size_t>(dir)].for_each_param(prefix + "head_" + to_string(dir) + ".", visit);
  }
  visit(prefix + "out_w", out_w);
  visit(prefix + "out_b", out_b);
}

Tensor ss2d_tokens(const Tensor& tokens, std::size_t height, std::size_t width, const SS2DWeights& w,
                   const SS2DOptions& opts) {
  if (tokens.rank() != 2 || tokens.dim(1) != w.channels()) {
    throw DimensionError("ss2d: input channels " + shape_to_string(tokens.shape()) + " vs weights for " +
                         std::to_string(w.channels()));
  }
  const Tensor a = scale(exp(w.a_log), -1.0);
  auto seqs = cross_scan_tokens(tokens, height, width);
  for (auto dir : kAllDirections) {
    const auto& head = w.heads[static_cast<std::size_t>(dir)];
    const Tensor& seq = seqs[dir];
    auto sel = selective_parameterize(seq, head);
    seqs[dir] = selective_scan(seq, sel.delta, a, sel.B, sel.C, w.d_skip, opts.algorithm, opts.bbar);
  }
  return linear(cross_merge_tokens(seqs), w.out_w, w.out_b);
}

FeatureMap ss2d_forward(const FeatureMap& f, const SS2DWeights& w, const SS2DOptions& opts) {
  return FeatureMap::from_tokens(ss2d_tokens(f.to_tokens(), f.height(), f.width(), w, opts), f.height(), f.width());
}

}  // namespace vmamba
