#include "vmamba/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "vmamba/autograd.hpp"
#include "vmamba/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace vmamba {

namespace {

thread_local bool g_grad_enabled = true;

#if defined(__GLIBC__)
// Graph buffers are allocated and released every step. Serving them from
// mmap makes each release an munmap and each allocation fresh page faults,
// so keep them on the heap instead.
const bool g_allocator_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
#endif

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " holds " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::make_shared<std::vector<double>>(std::move(values));
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("tensor: use of an undefined tensor");
  return *node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = vmamba::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).values->size(); }

std::span<const double> Tensor::data() const { return *checked(node_).values; }

std::span<double> Tensor::mutable_data() {
  checked(node_);
  return *node_->values;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("tensor: item() on " + shape_to_string(shape()));
  return data()[0];
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
  checked(node_);
  if (node_->backward && !on) throw ContractError("tensor: cannot stop tracking a non-leaf; use detach()");
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(node_).grad; }

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  auto out = std::make_shared<detail::Node>();
  out->shape = n.shape;
  out->values = n.values;
  return Tensor(std::move(out));
}

Tensor Tensor::clone() const { return Tensor(shape(), to_vector()); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (vmamba::numel(new_shape) != numel()) {
    throw DimensionError("reshape: " + shape_to_string(shape()) + " -> " + shape_to_string(new_shape));
  }
  return detail::make_view(*this, std::move(new_shape));
}

bool Tensor::all_finite() const {
  auto d = data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::backward() const {
  const auto& root = checked(node_);
  if (root.values->size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + shape_to_string(root.shape));
  }
  if (!root.requires_grad) {
    throw ContractError("backward: loss is not connected to any tensor that requires grad");
  }

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<detail::Node*, std::vector<double>> interior;
  auto buffer_for = [&](detail::Node* n) -> double* {
    if (!n->requires_grad) return nullptr;
    if (!n->backward) {
      if (n->grad.empty()) n->grad.assign(n->values->size(), 0.0);
      return n->grad.data();
    }
    auto& g = interior[n];
    if (g.empty()) g.assign(n->values->size(), 0.0);
    return g.data();
  };

  buffer_for(node_.get())[0] += 1.0;
  std::vector<double*> refs;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward) continue;
    auto found = interior.find(n);
    if (found == interior.end()) continue;
    std::vector<double> grad_out = std::move(found->second);
    interior.erase(found);
    refs.clear();
    for (const auto& p : n->parents) refs.push_back(buffer_for(p.get()));
    n->backward(grad_out, refs);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by a tensor operation");
  }
  auto node = new_node(std::move(shape), std::move(values), false);
  if (g_grad_enabled) {
    const bool track = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (track) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->parents.reserve(inputs.size());
      for (const auto& t : inputs) node->parents.push_back(t.node());
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   BackwardFn backward) {
  return make_result(std::move(shape), std::move(values), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor make_view(const Tensor& source, Shape shape) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = source.node()->values;
  if (g_grad_enabled && source.requires_grad()) {
    node->requires_grad = true;
    node->parents.push_back(source.node());
    node->backward = [](std::span<const double> g, GradRefs in) {
      for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
    };
  }
  return Tensor(std::move(node));
}

}  // namespace detail

namespace {
constexpr char kMagic[4] = {'V', 'S', 'S', 'T'};
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  const auto rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (auto d : t.shape()) {
    const auto d64 = static_cast<std::uint64_t>(d);
    out.write(reinterpret_cast<const char*>(&d64), sizeof d64);
  }
  auto values = t.data();
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw IngestionError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open tensor file: " + path.string());
  char magic[4];
  std::uint32_t rank = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rank), sizeof rank);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IngestionError("not a VSST tensor file: " + path.string());
  if (rank > 16) throw IngestionError("implausible tensor rank in " + path.string());
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint64_t d64 = 0;
    in.read(reinterpret_cast<char*>(&d64), sizeof d64);
    d = static_cast<std::size_t>(d64);
  }
  std::vector<double> values(numel(shape));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw IngestionError("truncated tensor file: " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) throw IngestionError("trailing bytes in " + path.string());
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace vmamba
