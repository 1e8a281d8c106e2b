#include "vmamba/vss_block.hpp"

#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"

namespace vmamba {

namespace {
constexpr double kNormEps = 1e-5;
}

VSSBlockWeights VSSBlockWeights::init(std::size_t channels, std::size_t state_dim, std::size_t ffn_ratio, Rng& rng,
                                      bool zero_output) {
  if (ffn_ratio < 1) throw ConfigurationError("VSS block: FFN expansion ratio must be >= 1");
  const std::size_t hidden = channels * ffn_ratio;
  VSSBlockWeights b;
  b.ln1_gamma = constant_param({channels}, 1.0);
  b.ln1_beta = constant_param({channels}, 0.0);
  b.ss2d = SS2DWeights::init(channels, state_dim, rng, zero_output);
  b.ln2_gamma = constant_param({channels}, 1.0);
  b.ln2_beta = constant_param({channels}, 0.0);
  b.ffn_w1 = fan_in_param({channels, hidden}, channels, rng);
  b.ffn_b1 = constant_param({hidden}, 0.0);
  b.ffn_w2 = zero_output ? constant_param({hidden, channels}, 0.0) : fan_in_param({hidden, channels}, hidden, rng);
  b.ffn_b2 = constant_param({channels}, 0.0);
  return b;
}

void VSSBlockWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "ln1.gamma", ln1_gamma);
  visit(prefix + "ln1.beta", ln1_beta);
  ss2d.for_each_param(prefix + "ss2d.", visit);
  visit(prefix + "ln2.gamma", ln2_gamma);
  visit(prefix + "ln2.beta", ln2_beta);
  visit(prefix + "ffn.w1", ffn_w1);
  visit(prefix + "ffn.b1", ffn_b1);
  visit(prefix + "ffn.w2", ffn_w2);
  visit(prefix + "ffn.b2", ffn_b2);
}

Tensor vss_tokens(const Tensor& tokens, std::size_t height, std::size_t width, const VSSBlockWeights& block,
                  const SS2DOptions& opts) {
  if (tokens.rank() != 2 || tokens.dim(1) != block.channels()) {
    throw DimensionError("vss_forward: " + shape_to_string(tokens.shape()) + " tokens for a " +
                         std::to_string(block.channels()) + "-channel block");
  }
  auto mid = add(ss2d_tokens(layer_norm(tokens, block.ln1_gamma, block.ln1_beta, kNormEps), height, width,
                             block.ss2d, opts),
                 tokens);
  auto hidden = gelu(linear(layer_norm(mid, block.ln2_gamma, block.ln2_beta, kNormEps), block.ffn_w1, block.ffn_b1));
  return add(linear(hidden, block.ffn_w2, block.ffn_b2), mid);
}

FeatureMap vss_forward(const FeatureMap& h, const VSSBlockWeights& block, const SS2DOptions& opts) {
  if (h.channels() != block.channels()) {
    throw DimensionError("vss_forward: " + std::to_string(h.channels()) + " input channels for a " +
                         std::to_string(block.channels()) + "-channel block");
  }
  return FeatureMap::from_tokens(vss_tokens(h.to_tokens(), h.height(), h.width(), block, opts), h.height(),
                                 h.width());
}

}  // namespace vmamba
