#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "contrinet/tensor.hpp"

namespace contrinet {

struct Node;

/// Propagates `self.grad` into the gradients of `self.inputs`.
using BackwardFn = std::function<void(const Node& self)>;

/// One vertex of the reverse-mode graph. Inputs are held by shared ownership;
/// nodes never reference their consumers, so graphs are freed with their root.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  /// Zero-initialised on first access.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Leaf that never receives gradients.
  static Var constant(Tensor value);
  /// Leaf that accumulates gradients (model parameters, checked inputs).
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool is_meta() const { return node_->value.is_meta(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated by the last backward pass (zeros if none reached it).
  const Tensor& grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates the output node of an op. The backward function is attached only
/// when gradient recording is enabled and some input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// Seeds d(root)/d(root) = 1 (root must hold a single element) and runs the
/// reverse sweep, accumulating into every reachable leaf.
void backward(const Var& root);
/// Same, with an explicit seed tensor shaped like `root`.
void backward(const Var& root, const Tensor& seed);

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace contrinet
