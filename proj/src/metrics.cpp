#include "vmamba/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vmamba/errors.hpp"

namespace vmamba {

namespace {

void require_comparable(const Tensor& a, const Tensor& b, const char* metric) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(metric) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  if (a.numel() == 0) throw DimensionError(std::string(metric) + ": empty input");
}

std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double centre = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Separable "valid" filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += taps[i] * plane[y * w + x + i];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += taps[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double mean_squared_error(const Tensor& a, const Tensor& b) {
  require_comparable(a, b, "mse");
  auto av = a.data(), bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  return s / static_cast<double>(av.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!(peak > 0.0)) throw DomainError("psnr: peak must be positive");
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b, double peak, const SsimOptions& opts) {
  require_comparable(a, b, "ssim");
  if (a.rank() != 3) throw DimensionError("ssim: expected [C,H,W], got " + shape_to_string(a.shape()));
  const std::size_t channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (h < opts.window || w < opts.window) {
    throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the " +
                         std::to_string(opts.window) + "x" + std::to_string(opts.window) + " window");
  }
  const auto taps = gaussian_taps(opts.window, opts.sigma);
  const double c1 = (opts.k1 * peak) * (opts.k1 * peak);
  const double c2 = (opts.k2 * peak) * (opts.k2 * peak);
  const std::size_t plane = h * w;
  auto av = a.data(), bv = b.data();

  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<double> pa(av.begin() + c * plane, av.begin() + (c + 1) * plane);
    std::vector<double> pb(bv.begin() + c * plane, bv.begin() + (c + 1) * plane);
    std::vector<double> aa(plane), bb(plane), ab(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, taps), mu_b = filter_valid(pb, h, w, taps);
    const auto e_aa = filter_valid(aa, h, w, taps), e_bb = filter_valid(bb, h, w, taps),
               e_ab = filter_valid(ab, h, w, taps);
    double channel_sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
      channel_sum += num / den;
    }
    total += channel_sum / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(channels);
}

}  // namespace vmamba
