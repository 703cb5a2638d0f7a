#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace temp::diff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

/// While alive on a thread, op results on that thread are recorded as
/// constants (no tape). Used for inference-only forward passes.
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

namespace detail {

// One vertex of the define-by-run tape. Leaves have no inputs.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty means "no gradient populated"
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<float>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float32 array that can participate in reverse-mode
/// differentiation. Copies share the underlying node; use clone() for a
/// deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  /// Creates an op result. When no input requires a gradient the inputs and
  /// backward function are dropped and the result is a constant.
  /// A null backward on a gradient-carrying result marks an unsupported
  /// primitive; backward() rejects graphs that contain one.
  static Tensor make_result(Shape shape, std::vector<float> values, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const float> values() const;
  /// Direct write access, for optimizers and input construction only.
  std::span<float> mutable_values();
  float item() const;
  float at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const float> grad() const;
  /// Gradient values, or zeros when none is populated.
  std::vector<float> grad_or_zero() const;
  void zero_grad();

  /// Populates gradients on every reachable leaf with requires_grad.
  /// Throws std::logic_error when called twice on the same graph or when a
  /// reachable leaf still holds a gradient from an earlier pass.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace temp::diff
