#include "temp/diff/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace temp::diff {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::vector<float>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  return grad;
}

namespace {

void validate_shape(const Shape& shape, std::size_t count) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_string(shape));
  }
  if (shape_numel(shape) != count) {
    throw std::invalid_argument("tensor of shape " + shape_string(shape) + " cannot hold " +
                                std::to_string(count) + " values");
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  validate_shape(shape, values.size());
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::make_result(Shape shape, std::vector<float> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  validate_shape(shape, values.size());
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool any = false;
  if (g_grad_enabled)
    for (const Tensor& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (any) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (Tensor& in : inputs) node->inputs.push_back(in.node_);  // may hold null for absent operands
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) throw std::out_of_range("tensor axis out of range");
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const float> Tensor::values() const { return node_->value; }

std::span<float> Tensor::mutable_values() { return node_->value; }

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw std::logic_error("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (node_->grad.empty()) throw std::logic_error("tensor has no populated gradient");
  return node_->grad;
}

std::vector<float> Tensor::grad_or_zero() const {
  if (node_->grad.empty()) return std::vector<float>(numel(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  if (numel() != 1) throw std::invalid_argument("backward() requires a scalar loss, got " + shape_string(shape()));
  if (!node_->requires_grad) throw std::logic_error("loss does not depend on any tensor that requires a gradient");
  if (node_->consumed) throw std::logic_error("backward() called twice on the same graph");

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (node->is_leaf()) {
      if (!node->grad.empty()) {
        throw std::logic_error("gradient of a leaf tensor was not reset before backward()");
      }
    } else {
      if (!node->backward) throw std::logic_error("graph contains a primitive without a backward rule");
      node->grad.clear();
    }
  }

  node_->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->is_leaf() || node->grad.empty()) continue;
    node->backward(*node);
  }
  node_->consumed = true;
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.node_->requires_grad = node_->requires_grad && node_->is_leaf();
  copy.node_->grad = node_->grad;
  return copy;
}

}  // namespace temp::diff
