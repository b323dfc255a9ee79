#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "protoseg/core/tensor.hpp"

namespace protoseg::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the dynamic computation graph. Leaves (parameters, inputs)
/// have no inputs and no backward function.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  // Reads `grad` of this node and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
  bool input_needs_grad(std::size_t i) const { return inputs[i] && inputs[i]->requires_grad; }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  const NodePtr& node() const noexcept { return node_; }
  void zero_grad();

 private:
  NodePtr node_;
};

/// Gradient recording is on by default; NoGradGuard turns it off for its
/// scope (inference, TTA, metric evaluation).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Inputs and the backward closure are only retained
/// when recording is enabled and some input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward,
                const char* op);

/// Reverse-mode sweep from a scalar root (seed 1). Intermediate gradients
/// and closures are released afterwards; leaf gradients accumulate.
void backward(const Var& root);

}  // namespace protoseg::ag
