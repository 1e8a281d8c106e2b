#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "vmamba/tensor.hpp"

namespace vmamba {

using Rng = std::mt19937_64;

// Visits a named trainable tensor. Names are dot-separated paths.
using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

// Fresh leaf tensors that require grad.
Tensor uniform_param(Shape shape, double bound, Rng& rng);
Tensor constant_param(Shape shape, double value);

// Weight with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) entries.
Tensor fan_in_param(Shape shape, std::size_t fan_in, Rng& rng);

// Derives an independent stream from the run seed by a fixed offset.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace vmamba
