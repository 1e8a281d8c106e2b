#pragma once

#include <array>

#include "vmamba/tensor.hpp"

namespace vmamba {

using Rgb = std::array<double, 3>;
using Matrix3 = std::array<std::array<double, 3>, 3>;

// sRGB transfer function (IEC 61966-2-1), extended antisymmetrically below zero.
double srgb_decode(double encoded);
double srgb_encode(double linear);

// Linear sRGB (D65) -> CIE XYZ.
Rgb linear_rgb_to_xyz(const Rgb& rgb);

/// Scene illuminant as an sRGB-encoded triple plus its XYZ tristimulus values.
struct Illuminant {
  Rgb rgb{};
  Rgb xyz{};

  // Throws DomainError unless every component is positive.
  static Illuminant from_rgb(const Rgb& rgb);
  // The working-space white point (D65), RGB (1, 1, 1).
  static Illuminant d65();
};

/// Gray-world estimate: per-channel mean of a [3, H, W] frame; channels with
/// mean below 1e-6 are floored at 1e-6.
Illuminant estimate_illuminant(const Tensor& frame);

/// Linear-RGB to linear-RGB Bradford adaptation matrix.
struct AdaptationTransform {
  Matrix3 matrix{};
  Rgb apply(const Rgb& linear_rgb) const;
};

AdaptationTransform bradford_transform(const Illuminant& src, const Illuminant& dst);

/// sRGB decode -> Bradford adaptation src -> dst -> sRGB encode, per pixel.
/// Clipping to [0, 1] happens only at the end, and only when `clip` is set.
Tensor chromatic_adapt(const Tensor& frame, const Illuminant& src, const Illuminant& dst, bool clip = true);

}  // namespace vmamba
