#include "vmamba/model.hpp"

#include "vmamba/errors.hpp"

namespace vmamba {

namespace {
// Per-component RNG streams derived from the run seed.
constexpr std::uint64_t kAlignmentStream = 1;
constexpr std::uint64_t kEnhanceStream = 2;
}  // namespace

AlignmentWeights AlignmentWeights::init(const EnhanceNetConfig& cfg, Rng& rng) {
  return {FeatureExtractorWeights::init(3, cfg.base_channels, rng),
          PyramidWeights::init(cfg.base_channels, cfg.pyramid_levels, rng),
          PcdWeights::init(cfg.base_channels, cfg.pyramid_levels, cfg.deform_kernel, rng)};
}

void AlignmentWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  extractor.for_each_param(prefix + "extract.", visit);
  pyramid.for_each_param(prefix + "pyramid.", visit);
  pcd.for_each_param(prefix + "pcd.", visit);
}

std::string parameter_stage(const std::string& name) {
  if (name.starts_with("align.")) return "alignment";
  for (const char* stage : {"embed", "encoder", "bottleneck", "decoder", "head"}) {
    if (name.starts_with(std::string("enhance.") + stage)) return stage;
  }
  return "other";
}

VideoEnhancer VideoEnhancer::init(const EnhanceNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  VideoEnhancer m;
  m.config_ = cfg;
  Rng align_rng = derive_rng(seed, kAlignmentStream);
  Rng enhance_rng = derive_rng(seed, kEnhanceStream);
  m.alignment_ = AlignmentWeights::init(cfg, align_rng);
  m.enhance_ = EnhanceNetWeights::init(cfg, enhance_rng);
  return m;
}

std::vector<NamedParam> VideoEnhancer::parameters() {
  std::vector<NamedParam> out;
  auto collect = [&](const std::string& name, Tensor& t) { out.push_back({name, t}); };
  alignment_.for_each_param("align.", collect);
  enhance_.for_each_param("enhance.", collect);
  return out;
}

std::vector<FeatureMap> VideoEnhancer::align_window(const std::vector<Tensor>& window) const {
  if (window.size() != config_.input_frames) {
    throw DimensionError("VideoEnhancer: window of " + std::to_string(window.size()) + " frames, model expects " +
                         std::to_string(config_.input_frames));
  }
  std::vector<FramePyramid> pyramids;
  for (const auto& frame : window) {
    if (frame.rank() != 3 || frame.dim(0) != 3 || frame.shape() != window[0].shape()) {
      throw DimensionError("VideoEnhancer: frames must share one [3,H,W] shape, got " + shape_to_string(frame.shape()));
    }
    pyramids.push_back(build_pyramid(extract_features(frame, alignment_.extractor), alignment_.pyramid));
  }
  const auto& reference = pyramids[config_.center_index()];
  std::vector<FeatureMap> aligned;
  for (const auto& p : pyramids) aligned.push_back(pcd_align(p, reference, alignment_.pcd));
  return aligned;
}

Tensor VideoEnhancer::forward(const std::vector<Tensor>& window, bool inference) const {
  auto aligned = align_window(window);
  return enhance_forward(aligned, window[config_.center_index()], config_, enhance_, inference);
}

}  // namespace vmamba
