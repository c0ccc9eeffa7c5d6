#include "contrinet/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace contrinet {
namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) {
    grad = Tensor::zeros_like(value);
  }
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() {
  if (node_->grad.shape() == node_->value.shape()) {
    node_->grad.fill(0.0);
  } else {
    node_->grad = Tensor::zeros_like(node_->value);
  }
}

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled || node->value.is_meta()) return Var(std::move(node));
  bool any = false;
  for (const Var& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (Var& in : inputs) node->inputs.push_back(in.node());
  node->backward = std::move(backward_fn);
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.value().numel() != 1) {
    throw std::invalid_argument("backward() without a seed requires a single-element root, got " +
                                to_string(root.shape()));
  }
  backward(root, Tensor(root.shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  require_same_shape(root.shape(), seed.shape(), "backward seed");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversing it yields a valid reverse sweep order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child != nullptr && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().add_(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.shape() == node->value.shape()) node->backward(*node);
  }
  // Release interior gradients; leaves keep theirs for the optimizer.
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace contrinet
