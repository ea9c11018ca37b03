#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mman {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Raised when operand extents are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an API precondition (not a shape) is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

// One vertex of the recorded computation. Leaves have no inputs and no
// backward rule; interior nodes own a closure that reads `grad` and
// accumulates into the grads of `inputs`.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient buffer.
///
/// Copies share storage (handle semantics). Operations on tensors that
/// require gradients record themselves so that `backward` can later
/// propagate through them; tensors produced without any gradient-carrying
/// input carry no graph and are effectively immutable values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  /// Writable view of the values. Only valid on leaves; interior values are
  /// owned by the graph.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag = true);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Fresh leaf holding a copy of the values, disconnected from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach().set_requires_grad(requires_grad()); }

  bool is_leaf() const;

  // Graph plumbing used by the op implementations.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Recorded operations reachable from a root, in topological order
/// (every node appears after all of its inputs).
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  std::span<detail::Node* const> nodes() const { return nodes_; }

 private:
  std::vector<detail::Node*> nodes_;
};

/// Disables graph recording on this thread for its lifetime; results of ops
/// are plain values even when inputs require gradients.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// repeated calls; interior gradients are reset on every call.
void backward(const Tensor& loss);

}  // namespace mman
