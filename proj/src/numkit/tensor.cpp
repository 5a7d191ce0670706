#include "gst/numkit/tensor.hpp"

#include <unordered_set>

#include "gst/errors.hpp"

namespace gst::numkit {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

// Long chains would otherwise be released recursively.
Node::~Node() {
  std::vector<std::shared_ptr<Node>> pending = std::move(parents);
  while (!pending.empty()) {
    std::shared_ptr<Node> p = std::move(pending.back());
    pending.pop_back();
    if (p && p.use_count() == 1) {
      for (auto& q : p->parents) pending.push_back(std::move(q));
      p->parents.clear();
    }
  }
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_size(shape), 0.0);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor: empty shape");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor: zero extent in shape " + shape_str(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  throw DimensionError("tensor: rows() on rank " + std::to_string(s.size()));
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw DimensionError("tensor: cols() on rank " + std::to_string(s.size()));
}

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("tensor: undefined");
  if (!node_->parents.empty() || node_->backward) {
    throw ContractError("tensor: values of an operation result are immutable");
  }
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("tensor: item() on " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("tensor: requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_ && node_->parents.empty() && !node_->backward; }

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw ContractError("tensor: undefined");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& root) {
  if (!root.defined()) throw ContractError("backward: undefined root");
  if (root.size() != 1) {
    throw ContractError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (operands first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  detail::Node* r = root.node().get();
  r->ensure_grad();
  r->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace gst::numkit
