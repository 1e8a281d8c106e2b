#include "vmamba/enhance_net.hpp"

#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"

namespace vmamba {

void EnhanceNetConfig::validate() const {
  if (input_frames == 0 || input_frames % 2 == 0) {
    throw ConfigurationError("input_frames must be odd (2N+1), got " + std::to_string(input_frames));
  }
  if (base_channels == 0) throw ConfigurationError("base_channels must be positive");
  if (stage_depths.size() != num_scales) {
    throw ConfigurationError("stage_depths needs one entry per scale (" + std::to_string(num_scales) + "), got " +
                             std::to_string(stage_depths.size()));
  }
  if (num_scales > 6) throw ConfigurationError("num_scales above 6 is not supported");
  if (state_dim == 0) throw ConfigurationError("state_dim must be positive");
  if (ffn_ratio == 0) throw ConfigurationError("ffn_ratio must be >= 1");
  if (pyramid_levels == 0 || pyramid_levels > 6) throw ConfigurationError("pyramid_levels must be in [1, 6]");
  if (deform_kernel % 2 == 0) throw ConfigurationError("deform_kernel must be odd");
}

namespace {

std::vector<VSSBlockWeights> make_blocks(std::size_t count, std::size_t channels, const EnhanceNetConfig& cfg,
                                         Rng& rng) {
  std::vector<VSSBlockWeights> blocks;
  for (std::size_t i = 0; i < count; ++i) blocks.push_back(VSSBlockWeights::init(channels, cfg.state_dim, cfg.ffn_ratio, rng));
  return blocks;
}

void block_params(const std::string& prefix, std::vector<VSSBlockWeights>& blocks, const ParamVisitor& visit) {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].for_each_param(prefix + "block" + std::to_string(i) + ".", visit);
}

Tensor run_blocks(const Tensor& x, const std::vector<VSSBlockWeights>& blocks, const SS2DOptions& opts) {
  if (blocks.empty()) return x;
  FeatureMap fm(x);
  const std::size_t h = fm.height(), w = fm.width();
  Tensor tokens = fm.to_tokens();
  for (const auto& b : blocks) tokens = vss_tokens(tokens, h, w, b, opts);
  return FeatureMap::from_tokens(tokens, h, w).values();
}

}  // namespace

EnhanceNetWeights EnhanceNetWeights::init(const EnhanceNetConfig& cfg, Rng& rng) {
  cfg.validate();
  EnhanceNetWeights w;
  const std::size_t c0 = cfg.base_channels;
  w.embed = ConvLayer::init(c0, cfg.input_frames * c0, 1, rng);
  for (std::size_t s = 0; s < cfg.num_scales; ++s) {
    const std::size_t c = cfg.stage_channels(s);
    EncoderStage stage;
    stage.blocks = make_blocks(cfg.stage_depths[s], c, cfg, rng);
    stage.down = ConvLayer::init(2 * c, c, 3, rng);
    w.encoder.push_back(std::move(stage));
  }
  w.bottleneck = make_blocks(cfg.bottleneck_depth, cfg.stage_channels(cfg.num_scales), cfg, rng);
  for (std::size_t s = 0; s < cfg.num_scales; ++s) {
    const std::size_t c = cfg.stage_channels(s);
    DecoderStage stage;
    stage.up = UpsampleLayer::init(c, 2 * c, 2, rng);
    stage.reduce = ConvLayer::init(c, 2 * c, 1, rng);
    stage.blocks = make_blocks(cfg.stage_depths[s], c, cfg, rng);
    w.decoder.push_back(std::move(stage));
  }
  w.head = ConvLayer::init(3, c0, 1, rng, /*zero=*/true);
  return w;
}

void EnhanceNetWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  embed.for_each_param(prefix + "embed.", visit);
  for (std::size_t s = 0; s < encoder.size(); ++s) {
    const std::string p = prefix + "encoder" + std::to_string(s) + ".";
    block_params(p, encoder[s].blocks, visit);
    encoder[s].down.for_each_param(p + "down.", visit);
  }
  block_params(prefix + "bottleneck.", bottleneck, visit);
  for (std::size_t s = 0; s < decoder.size(); ++s) {
    const std::string p = prefix + "decoder" + std::to_string(s) + ".";
    decoder[s].up.for_each_param(p + "up.", visit);
    decoder[s].reduce.for_each_param(p + "reduce.", visit);
    block_params(p, decoder[s].blocks, visit);
  }
  head.for_each_param(prefix + "head.", visit);
}

Tensor enhance_forward(const std::vector<FeatureMap>& aligned, const Tensor& center_rgb, const EnhanceNetConfig& cfg,
                       const EnhanceNetWeights& w, bool inference) {
  if (aligned.size() != cfg.input_frames) {
    throw DimensionError("enhance_forward: expected " + std::to_string(cfg.input_frames) + " aligned maps, got " +
                         std::to_string(aligned.size()));
  }
  const std::size_t h = aligned[0].height(), wd = aligned[0].width();
  std::vector<Tensor> parts;
  for (const auto& a : aligned) {
    if (!a.same_shape(aligned[0]) || a.channels() != cfg.base_channels) {
      throw DimensionError("enhance_forward: aligned maps must all be [" + std::to_string(cfg.base_channels) +
                           "," + std::to_string(h) + "," + std::to_string(wd) + "]");
    }
    parts.push_back(a.values());
  }
  if (center_rgb.shape() != Shape{3, h, wd}) {
    throw DimensionError("enhance_forward: center frame " + shape_to_string(center_rgb.shape()) +
                         " does not match the aligned features");
  }

  const std::size_t multiple = std::size_t{1} << cfg.num_scales;
  const std::size_t ph = (h + multiple - 1) / multiple * multiple, pw = (wd + multiple - 1) / multiple * multiple;
  Tensor x = concat(parts);
  if (ph != h || pw != wd) x = reflect_pad2d(x, ph - h, pw - wd);
  if (x.dim(1) % multiple != 0 || x.dim(2) % multiple != 0) {
    throw ConfigurationError("enhance_forward: padded size not divisible by 2^" + std::to_string(cfg.num_scales));
  }

  const auto opts = cfg.ss2d_options();
  x = w.embed.forward(x);
  std::vector<Tensor> skips;
  for (const auto& stage : w.encoder) {
    x = run_blocks(x, stage.blocks, opts);
    skips.push_back(x);
    x = stage.down.forward(x, 2);
  }
  x = run_blocks(x, w.bottleneck, opts);
  for (std::size_t s = w.decoder.size(); s-- > 0;) {
    const auto& stage = w.decoder[s];
    x = stage.up.forward(x);
    if (x.dim(1) != skips[s].dim(1) || x.dim(2) != skips[s].dim(2)) {
      throw DimensionError("enhance_forward: decoder stage " + std::to_string(s) + " is " +
                           shape_to_string(x.shape()) + " but its skip is " + shape_to_string(skips[s].shape()));
    }
    x = stage.reduce.forward(concat({x, skips[s]}));
    x = run_blocks(x, stage.blocks, opts);
  }
  Tensor residual = w.head.forward(x);
  if (ph != h || pw != wd) residual = crop2d(residual, h, wd);
  Tensor out = add(residual, center_rgb);
  return inference ? clamp(out, 0.0, 1.0) : out;
}

}  // namespace vmamba
