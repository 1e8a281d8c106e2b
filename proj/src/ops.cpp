#include "vmamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gemm.hpp"
#include "vmamba/autograd.hpp"
#include "vmamba/errors.hpp"

namespace vmamba {

using detail::GradRefs;
using detail::make_result;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

// y = f(x) with dy/dx = df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto result = make_result(x.shape(), std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    auto xd = x.detach();
    auto yd = result.detach();
    result.node()->backward = [xd, yd, df](std::span<const double> g, GradRefs in) {
      auto xs = xd.data();
      auto ys = yd.data();
      for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * df(xs[i], ys[i]);
    };
  }
  return result;
}

std::size_t trailing_check(const Tensor& x, const Tensor& v, const char* op) {
  if (x.rank() == 0 || v.rank() != 1 || x.shape().back() != v.dim(0)) {
    throw DimensionError(std::string(op) + ": trailing axis of " + shape_to_string(x.shape()) +
                         " does not match " + shape_to_string(v.shape()));
  }
  return v.dim(0);
}

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, GradRefs in) {
    for (int k = 0; k < 2; ++k)
      if (in[k])
        for (std::size_t i = 0; i < g.size(); ++i) in[k][i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, GradRefs in) {
    if (in[0])
      for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
    if (in[1])
      for (std::size_t i = 0; i < g.size(); ++i) in[1][i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto ad = a.detach(), bd = b.detach();
  return make_result(a.shape(), std::move(out), {a, b}, [ad, bd](std::span<const double> g, GradRefs in) {
    auto av = ad.data(), bv = bd.data();
    if (in[0])
      for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * bv[i];
    if (in[1])
      for (std::size_t i = 0; i < g.size(); ++i) in[1][i] += g[i] * av[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)) + v * phi(v); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor add_trailing(const Tensor& x, const Tensor& v) {
  const std::size_t c = trailing_check(x, v, "add_trailing");
  auto xv = x.data(), vv = v.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + vv[i % c];
  return make_result(x.shape(), std::move(out), {x, v}, [c](std::span<const double> g, GradRefs in) {
    if (in[0])
      for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
    if (in[1])
      for (std::size_t i = 0; i < g.size(); ++i) in[1][i % c] += g[i];
  });
}

Tensor mul_trailing(const Tensor& x, const Tensor& v) {
  const std::size_t c = trailing_check(x, v, "mul_trailing");
  auto xv = x.data(), vv = v.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * vv[i % c];
  auto xd = x.detach(), vd = v.detach();
  return make_result(x.shape(), std::move(out), {x, v}, [c, xd, vd](std::span<const double> g, GradRefs in) {
    auto xv = xd.data(), vv = vd.data();
    if (in[0])
      for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * vv[i % c];
    if (in[1])
      for (std::size_t i = 0; i < g.size(); ++i) in[1][i % c] += g[i] * xv[i];
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || x.dim(0) != bias.dim(0)) {
    throw DimensionError("add_channel_bias: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(bias.shape()));
  }
  const std::size_t channels = bias.dim(0);
  const std::size_t inner = channels ? x.numel() / channels : 0;
  auto xv = x.data(), bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] = xv[c * inner + i] + bv[c];
  return make_result(x.shape(), std::move(out), {x, bias},
                     [channels, inner](std::span<const double> g, GradRefs in) {
                       if (in[0])
                         for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                       if (in[1])
                         for (std::size_t c = 0; c < channels; ++c) {
                           double s = 0.0;
                           for (std::size_t i = 0; i < inner; ++i) s += g[c * inner + i];
                           in[1][c] += s;
                         }
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.numel();
  return make_result({}, {s}, {x}, [n](std::span<const double> g, GradRefs in) {
    for (std::size_t i = 0; i < n; ++i) in[0][i] += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return scale(sum(x), n > 0 ? 1.0 / n : 0.0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  auto ad = a.detach(), bd = b.detach();
  return make_result({m, n}, std::move(out), {a, b}, [=](std::span<const double> g, GradRefs in) {
    if (in[0]) detail::gemm_nt_acc(g.data(), bd.data().data(), in[0], m, n, k);
    if (in[1]) detail::gemm_tn_acc(ad.data().data(), g.data(), in[1], k, m, n);
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return make_result({c, r}, std::move(out), {x}, [r, c](std::span<const double> g, GradRefs in) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) in[0][i * c + j] += g[j * r + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  auto y = matmul(x, weight);
  return bias.defined() ? add_trailing(y, bias) : y;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() != tail.size() + 1 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat: " + shape_to_string(p.shape()) + " incompatible with " +
                           shape_to_string(parts[0].shape()));
    }
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.numel());
  return make_result(std::move(shape), std::move(out), parts, [sizes](std::span<const double> g, GradRefs in) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (in[k])
        for (std::size_t i = 0; i < sizes[k]; ++i) in[k][i] += g[offset + i];
      offset += sizes[k];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw DimensionError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         shape_to_string(x.shape()));
  }
  const std::size_t inner = x.dim(0) ? x.numel() / x.dim(0) : 0;
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto xv = x.data();
  std::vector<double> out(xv.begin() + begin * inner, xv.begin() + end * inner);
  const std::size_t offset = begin * inner;
  return make_result(std::move(shape), std::move(out), {x}, [offset](std::span<const double> g, GradRefs in) {
    for (std::size_t i = 0; i < g.size(); ++i) in[0][offset + i] += g[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = trailing_check(x, gamma, "layer_norm");
  trailing_check(x, beta, "layer_norm");
  const std::size_t rows = c ? x.numel() / c : 0;
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  auto gd = gamma.detach();
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [=](std::span<const double> g, GradRefs in) {
                       auto gv = gd.data();
                       const double inv_c = 1.0 / static_cast<double>(c);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g.data() + r * c;
                         const double* hr = xhat->data() + r * c;
                         if (in[1])
                           for (std::size_t j = 0; j < c; ++j) in[1][j] += gr[j] * hr[j];
                         if (in[2])
                           for (std::size_t j = 0; j < c; ++j) in[2][j] += gr[j];
                         if (in[0]) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double gh = gr[j] * gv[j];
                             m1 += gh;
                             m2 += gh * hr[j];
                           }
                           m1 *= inv_c;
                           m2 *= inv_c;
                           for (std::size_t j = 0; j < c; ++j) {
                             in[0][r * c + j] += (*rstd)[r] * (gr[j] * gv[j] - m1 - hr[j] * m2);
                           }
                         }
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, k, stride, pad, ho, wo;
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((ci * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(row + oy * g.wo, g.wo, 0.0);
            continue;
          }
          const double* src = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            row[oy * g.wo + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
}

void col2im_acc(const double* cols, const ConvGeometry& g, double* x) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((ci * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const std::size_t cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  if (w.dim(3) != k) throw ConfigurationError("conv2d: kernel must be square, got " + shape_to_string(w.shape()));
  if (k % 2 == 0) throw ConfigurationError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride == 0) throw ConfigurationError("conv2d: stride must be positive");
  if (x.dim(0) != cin) {
    throw DimensionError("conv2d: input " + shape_to_string(x.shape()) + " vs weight " + shape_to_string(w.shape()));
  }
  const std::size_t h = x.dim(1), wd = x.dim(2);
  if (h + 2 * pad < k || wd + 2 * pad < k) {
    throw ConfigurationError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                             shape_to_string(x.shape()));
  }
  ConvGeometry g{cin, h, wd, k, stride, pad, (h + 2 * pad - k) / stride + 1, (wd + 2 * pad - k) / stride + 1};
  const std::size_t plane = g.ho * g.wo, patch = cin * k * k;

  const bool pointwise = (k == 1 && stride == 1 && pad == 0);
  std::shared_ptr<std::vector<double>> cols;
  const double* cols_ptr = x.data().data();
  if (!pointwise) {
    cols = std::make_shared<std::vector<double>>(patch * plane);
    im2col(x.data().data(), g, cols->data());
    cols_ptr = cols->data();
  }
  std::vector<double> out(cout * plane);
  detail::gemm_nn(w.data().data(), cols_ptr, out.data(), cout, patch, plane, false);

  auto xd = x.detach(), wdt = w.detach();
  return make_result({cout, g.ho, g.wo}, std::move(out), {x, w}, [=](std::span<const double> gout, GradRefs in) {
    const double* cp = pointwise ? xd.data().data() : cols->data();
    if (in[1]) detail::gemm_nt_acc(gout.data(), cp, in[1], cout, plane, patch);
    if (in[0]) {
      if (pointwise) {
        detail::gemm_tn_acc(wdt.data().data(), gout.data(), in[0], patch, cout, plane);
      } else {
        std::vector<double> gcols(patch * plane, 0.0);
        detail::gemm_tn_acc(wdt.data().data(), gout.data(), gcols.data(), patch, cout, plane);
        col2im_acc(gcols.data(), g, in[0]);
      }
    }
  });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, std::size_t stride) {
  require_rank(x, 3, "conv_transpose2d");
  require_rank(w, 4, "conv_transpose2d");
  const std::size_t cin = w.dim(0), cout = w.dim(1), k = w.dim(2);
  if (w.dim(3) != k) throw ConfigurationError("conv_transpose2d: kernel must be square");
  if (stride == 0 || k == 0) throw ConfigurationError("conv_transpose2d: stride and kernel must be positive");
  if (x.dim(0) != cin) {
    throw DimensionError("conv_transpose2d: input " + shape_to_string(x.shape()) + " vs weight " +
                         shape_to_string(w.shape()));
  }
  const std::size_t h = x.dim(1), wd = x.dim(2);
  const std::size_t ho = h ? (h - 1) * stride + k : 0, wo = wd ? (wd - 1) * stride + k : 0;
  const std::size_t plane = h * wd, taps = cout * k * k;

  std::vector<double> cols(taps * plane, 0.0);
  detail::gemm_tn_acc(w.data().data(), x.data().data(), cols.data(), taps, cin, plane);
  std::vector<double> out(cout * ho * wo, 0.0);
  auto scatter_index = [=](std::size_t co, std::size_t ki, std::size_t kj, std::size_t iy, std::size_t ix) {
    return (co * ho + iy * stride + ki) * wo + ix * stride + kj;
  };
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols.data() + ((co * k + ki) * k + kj) * plane;
        for (std::size_t iy = 0; iy < h; ++iy)
          for (std::size_t ix = 0; ix < wd; ++ix) out[scatter_index(co, ki, kj, iy, ix)] += row[iy * wd + ix];
      }

  auto xd = x.detach(), wdt = w.detach();
  return make_result({cout, ho, wo}, std::move(out), {x, w}, [=](std::span<const double> gout, GradRefs in) {
    std::vector<double> gcols(taps * plane);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t kj = 0; kj < k; ++kj) {
          double* row = gcols.data() + ((co * k + ki) * k + kj) * plane;
          for (std::size_t iy = 0; iy < h; ++iy)
            for (std::size_t ix = 0; ix < wd; ++ix) row[iy * wd + ix] = gout[scatter_index(co, ki, kj, iy, ix)];
        }
    if (in[0]) detail::gemm_nn(wdt.data().data(), gcols.data(), in[0], cin, taps, plane, true);
    if (in[1]) detail::gemm_nt_acc(xd.data().data(), gcols.data(), in[1], cin, plane, taps);
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  std::vector<double> out(index.size() * c);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= n) throw DimensionError("gather_rows: index out of range");
    std::copy_n(xv.data() + index[k] * c, c, out.data() + k * c);
  }
  return make_result({index.size(), c}, std::move(out), {x}, [index, c](std::span<const double> g, GradRefs in) {
    for (std::size_t k = 0; k < index.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) in[0][index[k] * c + j] += g[k * c + j];
  });
}

Tensor scatter_add_rows(const Tensor& x, const std::vector<std::size_t>& index, std::size_t rows) {
  require_rank(x, 2, "scatter_add_rows");
  const std::size_t c = x.dim(1);
  if (x.dim(0) != index.size()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_to_string(x.shape()));
  }
  auto xv = x.data();
  std::vector<double> out(rows * c, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= rows) throw DimensionError("scatter_add_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[index[k] * c + j] += xv[k * c + j];
  }
  return make_result({rows, c}, std::move(out), {x}, [index, c](std::span<const double> g, GradRefs in) {
    for (std::size_t k = 0; k < index.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) in[0][k * c + j] += g[index[k] * c + j];
  });
}

namespace {

std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor reflect_pad2d(const Tensor& x, std::size_t pad_bottom, std::size_t pad_right) {
  require_rank(x, 3, "reflect_pad2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if ((pad_bottom && h == 0) || (pad_right && w == 0)) throw DimensionError("reflect_pad2d: empty input");
  const std::size_t ho = h + pad_bottom, wo = w + pad_right;
  std::vector<std::size_t> src(c * ho * wo);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx)
        src[(ch * ho + y) * wo + xx] = (ch * h + reflect_index(y, h)) * w + reflect_index(xx, w);
  auto xv = x.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xv[src[i]];
  return make_result({c, ho, wo}, std::move(out), {x}, [src](std::span<const double> g, GradRefs in) {
    for (std::size_t i = 0; i < src.size(); ++i) in[0][src[i]] += g[i];
  });
}

Tensor crop2d(const Tensor& x, std::size_t height, std::size_t width) {
  require_rank(x, 3, "crop2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (height > h || width > w) throw DimensionError("crop2d: crop larger than " + shape_to_string(x.shape()));
  auto xv = x.data();
  std::vector<double> out(c * height * width);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < height; ++y)
      std::copy_n(xv.data() + (ch * h + y) * w, width, out.data() + (ch * height + y) * width);
  return make_result({c, height, width}, std::move(out), {x}, [=](std::span<const double> g, GradRefs in) {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t xx = 0; xx < width; ++xx) in[0][(ch * h + y) * w + xx] += g[(ch * height + y) * width + xx];
  });
}

namespace {

struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisTaps resize_taps(std::size_t in, std::size_t out) {
  AxisTaps t;
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto l = static_cast<std::size_t>(std::floor(s));
    t.lo.push_back(l);
    t.hi.push_back(std::min(l + 1, in - 1));
    t.frac.push_back(s - static_cast<double>(l));
  }
  return t;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "upsample_bilinear");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if ((h == 0 || w == 0) && out_h * out_w > 0) throw DimensionError("upsample_bilinear: empty input");
  const AxisTaps ty = resize_taps(h, out_h), tx = resize_taps(w, out_w);
  auto xv = x.data();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* p = xv.data() + ch * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = ty.frac[y];
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const double fx = tx.frac[xx];
        const double top = p[ty.lo[y] * w + tx.lo[xx]] * (1 - fx) + p[ty.lo[y] * w + tx.hi[xx]] * fx;
        const double bot = p[ty.hi[y] * w + tx.lo[xx]] * (1 - fx) + p[ty.hi[y] * w + tx.hi[xx]] * fx;
        out[(ch * out_h + y) * out_w + xx] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return make_result({c, out_h, out_w}, std::move(out), {x}, [=](std::span<const double> g, GradRefs in) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = in[0] + ch * h * w;
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const double gv = g[(ch * out_h + y) * out_w + xx];
          const double fy = ty.frac[y], fx = tx.frac[xx];
          p[ty.lo[y] * w + tx.lo[xx]] += gv * (1 - fy) * (1 - fx);
          p[ty.lo[y] * w + tx.hi[xx]] += gv * (1 - fy) * fx;
          p[ty.hi[y] * w + tx.lo[xx]] += gv * fy * (1 - fx);
          p[ty.hi[y] * w + tx.hi[xx]] += gv * fy * fx;
        }
    }
  });
}

Tensor charbonnier_loss(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape(a, b, "charbonnier_loss");
  const std::size_t n = a.numel();
  if (n == 0) throw DimensionError("charbonnier_loss: empty input");
  auto av = a.data(), bv = b.data();
  auto ratio = std::make_shared<std::vector<double>>(n);
  double total = 0.0;
  const double eps2 = eps * eps;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = av[i] - bv[i];
    const double r = std::sqrt(d * d + eps2);
    total += r;
    (*ratio)[i] = d / r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_result({}, {total * inv_n}, {a, b}, [ratio, inv_n](std::span<const double> g, GradRefs in) {
    const double s = g[0] * inv_n;
    for (std::size_t i = 0; i < ratio->size(); ++i) {
      if (in[0]) in[0][i] += s * (*ratio)[i];
      if (in[1]) in[1][i] -= s * (*ratio)[i];
    }
  });
}

}  // namespace vmamba
