#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vmamba {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major float64 array with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap shared handle: copies alias the same values. Values are
/// treated as immutable once an operation has consumed them; only parameters
/// are edited in place (initialization, optimizer updates) through
/// mutable_data(). Gradients accumulate across backward() calls until
/// zero_grad().
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no graph history. Shares storage.
  Tensor detach() const;
  // Deep copy of the values, no graph history.
  Tensor clone() const;
  // Metadata-only view; differentiable.
  Tensor reshape(Shape shape) const;

  bool all_finite() const;

  /// Reverse-mode accumulation from this scalar into every reachable leaf that
  /// requires grad. Throws ContractError for a non-scalar or untracked tensor.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Checkpoint format: "VSST", u32 rank, u64 dims[rank], f64 values, little-endian.
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace vmamba
