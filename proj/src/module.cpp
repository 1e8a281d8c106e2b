#include "vmamba/module.hpp"

#include <cmath>

namespace vmamba {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor constant_param(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

Tensor fan_in_param(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_param(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in ? fan_in : 1)), rng);
}

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace vmamba
