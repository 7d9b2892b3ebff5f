#include "tensor/graph.hpp"

#include "core/error.hpp"

namespace advpaint {

const Tensor& Var::value() const {
  require(graph_ != nullptr, ErrorCode::kContract, "use of an unbound Var");
  return graph_->value(*this);
}

bool Var::requires_grad() const { return graph_ && graph_->requires_grad(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owner(Var v) const {
  require(v.graph_ == this, ErrorCode::kContract, "Var belongs to a different graph");
}

Var Graph::input(Tensor value) {
  require(value.all_finite(), ErrorCode::kNumeric, "non-finite leaf value");
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::constant(Tensor value) {
  require(value.all_finite(), ErrorCode::kNumeric, "non-finite constant value");
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                  BackwardFn fn) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Graph::record(const char* op, Tensor value, const std::vector<Var>& inputs,
                  BackwardFn fn) {
  if (!value.all_finite()) fail(ErrorCode::kNumeric, std::string("non-finite output from ") + op);
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (Var in : inputs) {
    check_owner(in);
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor* Graph::grad_slot(Var v) {
  check_owner(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return &n.grad;
}

void Graph::backward(Var loss) {
  check_owner(loss);
  const Node& root = nodes_[loss.id_];
  require(root.value.numel() == 1, ErrorCode::kContract,
          "backward needs a scalar loss, got shape " + shape_str(root.value.shape()));
  for (Node& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  nodes_[loss.id_].grad = Tensor(root.value.shape(), 1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
    if (!n.inputs.empty()) n.grad = Tensor();  // only leaf gradients are kept
  }
}

const Tensor& Graph::grad(Var v) {
  check_owner(v);
  Node& n = nodes_[v.id_];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

}  // namespace advpaint
