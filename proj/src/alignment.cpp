#include "vmamba/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"
#include "vmamba/autograd.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"

namespace vmamba {

namespace {

// Bilinear footprint of a continuous position on an H x W plane. Corners
// outside the grid get weight 0 and index 0.
struct Footprint {
  std::size_t idx[4];  // (y0,x0) (y0,x0+1) (y0+1,x0) (y0+1,x0+1)
  double wt[4];
  double mask[4];  // 1 inside the grid, 0 outside
  double fy, fx;   // fractional parts
  bool exact;      // integer position
};

Footprint footprint(double y, double x, std::size_t h, std::size_t w) {
  Footprint fp;
  const double fy0 = std::floor(y), fx0 = std::floor(x);
  fp.fy = y - fy0;
  fp.fx = x - fx0;
  fp.exact = fp.fy == 0.0 && fp.fx == 0.0;
  // Positions far outside the grid contribute nothing; keep the indices small.
  const double lim = static_cast<double>(std::max(h, w)) + 2.0;
  const auto y0 = static_cast<std::ptrdiff_t>(std::clamp(fy0, -lim, lim));
  const auto x0 = static_cast<std::ptrdiff_t>(std::clamp(fx0, -lim, lim));
  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  const double wy[2] = {1 - fp.fy, fp.fy}, wx[2] = {1 - fp.fx, fp.fx};
  for (int j = 0; j < 4; ++j) {
    const std::ptrdiff_t yy = y0 + j / 2, xx = x0 + j % 2;
    const bool in = yy >= 0 && yy < hh && xx >= 0 && xx < ww;
    fp.idx[j] = in ? static_cast<std::size_t>(yy * ww + xx) : 0;
    fp.mask[j] = in ? 1.0 : 0.0;
    fp.wt[j] = in ? wy[j / 2] * wx[j % 2] : 0.0;
  }
  return fp;
}

double sample_plane(const double* p, const Footprint& fp) {
  if (fp.exact) return fp.mask[0] != 0.0 ? p[fp.idx[0]] : 0.0;
  return fp.wt[0] * p[fp.idx[0]] + fp.wt[1] * p[fp.idx[1]] + fp.wt[2] * p[fp.idx[2]] + fp.wt[3] * p[fp.idx[3]];
}

// Accumulates d(sample)/d(plane) * g into gp and returns (d/dy, d/dx) of the sample.
std::pair<double, double> sample_backward(const double* p, double* gp, const Footprint& fp, double g) {
  const double v00 = fp.mask[0] * p[fp.idx[0]], v01 = fp.mask[1] * p[fp.idx[1]];
  const double v10 = fp.mask[2] * p[fp.idx[2]], v11 = fp.mask[3] * p[fp.idx[3]];
  if (gp) {
    for (int j = 0; j < 4; ++j) gp[fp.idx[j]] += g * fp.wt[j];
  }
  const double dy = (1 - fp.fx) * (v10 - v00) + fp.fx * (v11 - v01);
  const double dx = (1 - fp.fy) * (v01 - v00) + fp.fy * (v11 - v10);
  return {g * dy, g * dx};
}

Tensor gelu_conv(const ConvLayer& layer, const Tensor& x, std::size_t stride = 1) {
  return gelu(layer.forward(x, stride));
}

}  // namespace

Tensor bilinear_sample(const FeatureMap& f, const Tensor& coords) {
  if (coords.shape() != Shape{2}) throw DimensionError("bilinear_sample: coords must be [2] = (y, x)");
  const std::size_t c = f.channels(), h = f.height(), w = f.width();
  const Footprint fp = footprint(coords[0], coords[1], h, w);
  auto fv = f.values().data();
  std::vector<double> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = sample_plane(fv.data() + ch * h * w, fp);
  auto fd = f.values().detach();
  return detail::make_result({c}, std::move(out), {f.values(), coords},
                             [=](std::span<const double> g, detail::GradRefs in) {
                               auto fv = fd.data();
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                 auto [gy, gx] = sample_backward(fv.data() + ch * h * w,
                                                                 in[0] ? in[0] + ch * h * w : nullptr, fp, g[ch]);
                                 if (in[1]) {
                                   in[1][0] += gy;
                                   in[1][1] += gx;
                                 }
                               }
                             });
}

Tensor bilinear_sample(const FeatureMap& f, double y, double x) { return bilinear_sample(f, Tensor({2}, {y, x})); }

FeatureMap deformable_conv2d(const FeatureMap& f, const Tensor& offsets, const Tensor& w) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0) {
    throw ConfigurationError("deformable_conv2d: weight must be [Cout,Cin,k,k] with odd k, got " +
                             shape_to_string(w.shape()));
  }
  const std::size_t cout = w.dim(0), cin = w.dim(1), k = w.dim(2), taps = k * k;
  const std::size_t h = f.height(), wd = f.width(), plane = h * wd;
  if (f.channels() != cin) {
    throw DimensionError("deformable_conv2d: input " + shape_to_string(f.values().shape()) + " vs weight " +
                         shape_to_string(w.shape()));
  }
  if (offsets.shape() != Shape{2 * taps, h, wd}) {
    throw DimensionError("deformable_conv2d: offsets must be " + shape_to_string({2 * taps, h, wd}) + ", got " +
                         shape_to_string(offsets.shape()));
  }
  const auto radius = static_cast<double>((k - 1) / 2);
  auto fv = f.values().data(), ov = offsets.data();

  // Sampling footprints per (tap, position), shared across input channels.
  auto fps = std::make_shared<std::vector<Footprint>>(taps * plane);
  for (std::size_t t = 0; t < taps; ++t) {
    const double ty = static_cast<double>(t / k) - radius, tx = static_cast<double>(t % k) - radius;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wd; ++x) {
        const std::size_t p = y * wd + x;
        (*fps)[t * plane + p] = footprint(static_cast<double>(y) + ty + ov[(2 * t) * plane + p],
                                          static_cast<double>(x) + tx + ov[(2 * t + 1) * plane + p], h, wd);
      }
  }
  const std::size_t patch = cin * taps;
  auto cols = std::make_shared<std::vector<double>>(patch * plane);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* src = fv.data() + ci * plane;
    for (std::size_t t = 0; t < taps; ++t) {
      double* row = cols->data() + (ci * taps + t) * plane;
      const Footprint* fp = fps->data() + t * plane;
      for (std::size_t p = 0; p < plane; ++p) row[p] = sample_plane(src, fp[p]);
    }
  }
  std::vector<double> out(cout * plane);
  detail::gemm_nn(w.data().data(), cols->data(), out.data(), cout, patch, plane, false);

  auto fd = f.values().detach(), wdt = w.detach();
  auto result = detail::make_result(
      {cout, h, wd}, std::move(out), {f.values(), offsets, w}, [=](std::span<const double> gout, detail::GradRefs in) {
        if (in[2]) detail::gemm_nt_acc(gout.data(), cols->data(), in[2], cout, plane, patch);
        if (!in[0] && !in[1]) return;
        std::vector<double> gcols(patch * plane, 0.0);
        detail::gemm_tn_acc(wdt.data().data(), gout.data(), gcols.data(), patch, cout, plane);
        auto fv = fd.data();
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* src = fv.data() + ci * plane;
          double* gsrc = in[0] ? in[0] + ci * plane : nullptr;
          for (std::size_t t = 0; t < taps; ++t) {
            const double* grow = gcols.data() + (ci * taps + t) * plane;
            const Footprint* fp = fps->data() + t * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              if (grow[p] == 0.0) continue;
              auto [gy, gx] = sample_backward(src, gsrc, fp[p], grow[p]);
              if (in[1]) {
                in[1][(2 * t) * plane + p] += gy;
                in[1][(2 * t + 1) * plane + p] += gx;
              }
            }
          }
        }
      });
  return FeatureMap(std::move(result));
}

FeatureExtractorWeights FeatureExtractorWeights::init(std::size_t in_channels, std::size_t channels, Rng& rng) {
  return {ConvLayer::init(channels, in_channels, 3, rng), ConvLayer::init(channels, channels, 3, rng)};
}

void FeatureExtractorWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  conv1.for_each_param(prefix + "conv1.", visit);
  conv2.for_each_param(prefix + "conv2.", visit);
}

PyramidWeights PyramidWeights::init(std::size_t channels, std::size_t levels, Rng& rng) {
  if (levels < 1) throw ConfigurationError("pyramid: at least one level required");
  PyramidWeights w;
  for (std::size_t i = 1; i < levels; ++i) w.down.push_back(ConvLayer::init(channels, channels, 3, rng));
  return w;
}

void PyramidWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  for (std::size_t i = 0; i < down.size(); ++i) down[i].for_each_param(prefix + "down" + std::to_string(i + 1) + ".", visit);
}

PcdWeights PcdWeights::init(std::size_t channels, std::size_t levels, std::size_t kernel, Rng& rng) {
  if (levels < 1) throw ConfigurationError("pcd: at least one pyramid level required");
  const std::size_t offset_channels = 2 * kernel * kernel;
  PcdWeights w;
  for (std::size_t lvl = 0; lvl < levels; ++lvl) {
    const bool coarsest = lvl + 1 == levels;
    PcdLevelWeights l;
    l.offset_conv = ConvLayer::init(channels, 2 * channels + (coarsest ? 0 : offset_channels), 3, rng);
    l.offset_head = ConvLayer::init(offset_channels, channels, 3, rng, /*zero=*/true);
    l.dcn = ConvLayer::init(channels, channels, kernel, rng);
    if (!coarsest) l.fuse = ConvLayer::init(channels, 2 * channels, 3, rng);
    w.levels.push_back(std::move(l));
  }
  w.cascade.offset_conv = ConvLayer::init(channels, 2 * channels, 3, rng);
  w.cascade.offset_head = ConvLayer::init(offset_channels, channels, 3, rng, /*zero=*/true);
  w.cascade.dcn = ConvLayer::init(channels, channels, kernel, rng);
  return w;
}

void PcdWeights::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  auto level_params = [&](const std::string& p, PcdLevelWeights& l) {
    l.offset_conv.for_each_param(p + "offset_conv.", visit);
    l.offset_head.for_each_param(p + "offset_head.", visit);
    l.dcn.for_each_param(p + "dcn.", visit);
    if (l.fuse.weight.defined()) l.fuse.for_each_param(p + "fuse.", visit);
  };
  for (std::size_t i = 0; i < levels.size(); ++i) level_params(prefix + "L" + std::to_string(i + 1) + ".", levels[i]);
  level_params(prefix + "cascade.", cascade);
}

FeatureMap extract_features(const Tensor& rgb, const FeatureExtractorWeights& w) {
  return FeatureMap(gelu_conv(w.conv2, gelu_conv(w.conv1, rgb)));
}

FramePyramid build_pyramid(const FeatureMap& features, const PyramidWeights& w) {
  FramePyramid pyr;
  pyr.levels.push_back(features);
  for (const auto& down : w.down) pyr.levels.emplace_back(gelu_conv(down, pyr.levels.back().values(), 2));
  return pyr;
}

namespace {

Tensor predict_offsets(const PcdLevelWeights& l, std::vector<Tensor> inputs, std::size_t h, std::size_t w) {
  const auto limit = static_cast<double>(std::max(h, w));
  return clamp(l.offset_head.forward(gelu_conv(l.offset_conv, concat(inputs))), -limit, limit);
}

Tensor apply_dcn(const ConvLayer& dcn, const FeatureMap& f, const Tensor& offsets) {
  return add_channel_bias(deformable_conv2d(f, offsets, dcn.weight).values(), dcn.bias);
}

}  // namespace

FeatureMap pcd_align(const FramePyramid& neighbor, const FramePyramid& reference, const PcdWeights& w) {
  const std::size_t depth = w.levels.size();
  if (neighbor.depth() != depth || reference.depth() != depth) {
    throw DimensionError("pcd_align: pyramids must have " + std::to_string(depth) + " levels");
  }
  for (std::size_t lvl = 0; lvl < depth; ++lvl) {
    if (!neighbor[lvl].same_shape(reference[lvl])) {
      throw DimensionError("pcd_align: level " + std::to_string(lvl + 1) + " shapes differ: " +
                           shape_to_string(neighbor[lvl].values().shape()) + " vs " +
                           shape_to_string(reference[lvl].values().shape()));
    }
  }

  Tensor offsets, aligned;
  for (std::size_t lvl = depth; lvl-- > 0;) {
    const auto& nbr = neighbor[lvl];
    const auto& ref = reference[lvl];
    const std::size_t h = nbr.height(), wd = nbr.width();
    const auto& weights = w.levels[lvl];
    std::vector<Tensor> inputs{nbr.values(), ref.values()};
    if (offsets.defined()) inputs.push_back(scale(upsample_bilinear(offsets, h, wd), 2.0));
    offsets = predict_offsets(weights, std::move(inputs), h, wd);
    Tensor feat = gelu(apply_dcn(weights.dcn, nbr, offsets));
    if (aligned.defined()) {
      feat = weights.fuse.forward(concat({feat, upsample_bilinear(aligned, h, wd)}));
      if (lvl > 0) feat = gelu(feat);
    }
    aligned = feat;
  }

  const auto& ref0 = reference[0];
  Tensor cascade_offsets = predict_offsets(w.cascade, {aligned, ref0.values()}, ref0.height(), ref0.width());
  return FeatureMap(gelu(apply_dcn(w.cascade.dcn, FeatureMap(aligned), cascade_offsets)));
}

}  // namespace vmamba
