#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "tensor/tensor.hpp"

namespace advpaint {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of primitive applications built during a forward pass. Backward runs
/// over the nodes in exact reverse construction order.
class Graph {
 public:
  /// Called during backward with the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf whose gradient is tracked.
  Var input(Tensor value);
  /// Leaf with no gradient.
  Var constant(Tensor value);

  /// Records a primitive. `fn` is dropped when no input requires a gradient.
  /// Throws kNumeric if `value` is not finite.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  /// Reverse-mode sweep from a one-element loss.
  void backward(Var loss);

  /// Gradient of a leaf after backward(); all zero when the loss does not reach it.
  /// Interior gradients are released during the sweep.
  const Tensor& grad(Var v);

  /// Gradient accumulator used by backward functions; nullptr when the node
  /// does not require a gradient.
  Tensor* grad_slot(Var v);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  const std::string& op_name(Var v) const { return nodes_[v.id_].op; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Node node);
  void check_owner(Var v) const;

  std::deque<Node> nodes_;
};

}  // namespace advpaint
