#pragma once

#include <cstddef>
#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor softplus(const Tensor& x);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// Trailing-axis affine broadcast: x[..., C] op v[C].
Tensor add_trailing(const Tensor& x, const Tensor& v);
Tensor mul_trailing(const Tensor& x, const Tensor& v);
// Leading-axis broadcast for channel-first maps: x[C, ...] + bias[C].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// x[N, Cin] W[Cin, Cout] + b[Cout]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Concatenate / slice along axis 0.
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Cross-correlation with zero padding. x[Cin,H,W], w[Cout,Cin,k,k], k odd.
// Output size floor((H + 2*pad - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad);
// Transposed convolution without padding. x[Cin,H,W], w[Cin,Cout,k,k];
// output ((H - 1) * stride + k) per axis.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, std::size_t stride);

// Row gather/scatter on x[N, C]: out[k] = x[index[k]] / out[index[k]] += x[k].
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index);
Tensor scatter_add_rows(const Tensor& x, const std::vector<std::size_t>& index, std::size_t rows);

// x[C,H,W]: reflect-pad at the bottom/right edges; crop the top-left block.
Tensor reflect_pad2d(const Tensor& x, std::size_t pad_bottom, std::size_t pad_right);
Tensor crop2d(const Tensor& x, std::size_t height, std::size_t width);

// Half-pixel-centred bilinear resize of x[C,H,W] to [C,out_h,out_w].
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

// mean(sqrt((a - b)^2 + eps^2))
Tensor charbonnier_loss(const Tensor& a, const Tensor& b, double eps = 1e-3);

}  // namespace vmamba
