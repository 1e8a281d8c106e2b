#pragma once

#include "vmamba/tensor.hpp"

namespace vmamba {

double mean_squared_error(const Tensor& a, const Tensor& b);

// 10 log10(peak^2 / MSE) in dB; +infinity when the inputs are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully-contained Gaussian windows, computed per channel
/// of [C, H, W] inputs and averaged across channels.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0, const SsimOptions& opts = {});

}  // namespace vmamba
