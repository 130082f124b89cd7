#include "snl/tape.hpp"

#include <string>

namespace snl {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::logic_error("operand recorded on a different tape");
    needs = needs || nodes_[in.id].requires_grad;
  }
  Node node{std::move(value), {}, needs, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) {
    throw std::logic_error("no gradient recorded for node " + std::to_string(id));
  }
  return n.grad;
}

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.numel() != n.value.numel() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("backward root from a different tape");
  if (nodes_[root.id].value.numel() != 1) {
    throw ShapeError("backward root must be scalar, got " +
                     shape_str(nodes_[root.id].value.shape()));
  }
  backward_order_.clear();
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor(n.value.shape(), 0.0);
  }
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].backward) {
      backward_order_.push_back(i);
      nodes_[i].backward(*this, i);
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  backward_order_.clear();
}

}  // namespace snl
