#pragma once

// Internals for authoring differentiable operations. Library code only.

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba::detail {

// Gradient buffers of an op's inputs, in input order. Null when the input
// does not require grad.
using GradRefs = std::span<double* const>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradRefs grad_in)>;

struct Node {
  Shape shape;
  std::shared_ptr<std::vector<double>> values;
  bool requires_grad = false;
  std::vector<double> grad;  // leaves only; empty until first backward
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

/// Wraps freshly computed values as an op result. The backward closure and
/// parent links are kept only when grad mode is on and some input requires
/// grad. Throws NumericError when the values are not all finite.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   BackwardFn backward);

// Shares the storage of `source` under a new shape.
Tensor make_view(const Tensor& source, Shape shape);

}  // namespace vmamba::detail
