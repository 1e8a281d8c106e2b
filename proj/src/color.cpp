#include "vmamba/color.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "vmamba/errors.hpp"

namespace vmamba {

namespace {

const Eigen::Matrix3d& rgb_to_xyz_matrix() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                    0.2126729, 0.7151522, 0.0721750,                       //
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

const Eigen::Matrix3d& bradford_matrix() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.8951, 0.2664, -0.1614,  //
                                    -0.7502, 1.7135, 0.0367,                       //
                                    0.0389, -0.0685, 1.0296)
                                       .finished();
  return m;
}

Eigen::Vector3d to_vec(const Rgb& v) { return {v[0], v[1], v[2]}; }

Eigen::Vector3d linear_of(const Illuminant& ill) {
  return {srgb_decode(ill.rgb[0]), srgb_decode(ill.rgb[1]), srgb_decode(ill.rgb[2])};
}

}  // namespace

double srgb_decode(double v) {
  const double a = std::abs(v);
  const double lin = a <= 0.04045 ? a / 12.92 : std::pow((a + 0.055) / 1.055, 2.4);
  return std::copysign(lin, v);
}

double srgb_encode(double v) {
  const double a = std::abs(v);
  const double enc = a <= 0.0031308 ? a * 12.92 : 1.055 * std::pow(a, 1.0 / 2.4) - 0.055;
  return std::copysign(enc, v);
}

Rgb linear_rgb_to_xyz(const Rgb& rgb) {
  const Eigen::Vector3d xyz = rgb_to_xyz_matrix() * to_vec(rgb);
  return {xyz[0], xyz[1], xyz[2]};
}

Illuminant Illuminant::from_rgb(const Rgb& rgb) {
  for (double c : rgb) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("Illuminant: components must be positive");
  }
  Illuminant ill;
  ill.rgb = rgb;
  ill.xyz = linear_rgb_to_xyz({srgb_decode(rgb[0]), srgb_decode(rgb[1]), srgb_decode(rgb[2])});
  return ill;
}

Illuminant Illuminant::d65() { return from_rgb({1.0, 1.0, 1.0}); }

Illuminant estimate_illuminant(const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) {
    throw DimensionError("estimate_illuminant: expected [3,H,W], got " + shape_to_string(frame.shape()));
  }
  const std::size_t plane = frame.dim(1) * frame.dim(2);
  if (plane == 0) throw DimensionError("estimate_illuminant: empty frame");
  auto v = frame.data();
  Rgb mean{};
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += v[c * plane + i];
    mean[c] = std::max(s / static_cast<double>(plane), 1e-6);
  }
  return Illuminant::from_rgb(mean);
}

Rgb AdaptationTransform::apply(const Rgb& p) const {
  Rgb out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = matrix[i][0] * p[0] + matrix[i][1] * p[1] + matrix[i][2] * p[2];
  return out;
}

AdaptationTransform bradford_transform(const Illuminant& src, const Illuminant& dst) {
  const Eigen::Matrix3d& m_xyz = rgb_to_xyz_matrix();
  const Eigen::Matrix3d& m_cone = bradford_matrix();
  const Eigen::Vector3d src_cone = m_cone * (m_xyz * linear_of(src));
  const Eigen::Vector3d dst_cone = m_cone * (m_xyz * linear_of(dst));
  const Eigen::Matrix3d gain = (dst_cone.array() / src_cone.array()).matrix().asDiagonal();
  const Eigen::Matrix3d total = m_xyz.inverse() * m_cone.inverse() * gain * m_cone * m_xyz;
  AdaptationTransform t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = total(i, j);
  return t;
}

Tensor chromatic_adapt(const Tensor& frame, const Illuminant& src, const Illuminant& dst, bool clip) {
  if (frame.rank() != 3 || frame.dim(0) != 3) {
    throw DimensionError("chromatic_adapt: expected [3,H,W], got " + shape_to_string(frame.shape()));
  }
  const auto t = bradford_transform(src, dst);
  const std::size_t plane = frame.dim(1) * frame.dim(2);
  auto v = frame.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < plane; ++i) {
    const Rgb lin = t.apply({srgb_decode(v[i]), srgb_decode(v[plane + i]), srgb_decode(v[2 * plane + i])});
    for (std::size_t c = 0; c < 3; ++c) {
      const double e = srgb_encode(lin[c]);
      out[c * plane + i] = clip ? std::clamp(e, 0.0, 1.0) : e;
    }
  }
  return Tensor(frame.shape(), std::move(out));
}

}  // namespace vmamba
