#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gst::numkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One record of the computation graph. Non-leaf nodes keep their operands in
// `parents` and a local gradient rule that pushes `grad` into them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
  ~Node();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// A Tensor is a cheap handle; copies share the same node. Values produced by
/// operations are immutable. Leaves (parameters, inputs) may be written
/// through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Matrix view: rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  // Empty span until a backward pass has reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
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

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable tensor that requires grad; leaves keep theirs until zero_grad().
void backward(const Tensor& root);

}  // namespace gst::numkit
