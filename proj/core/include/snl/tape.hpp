#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "snl/tensor.hpp"

namespace snl {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

// Reverse-mode tape. Each recorded operation stores its output value and a
// closure that propagates the output adjoint into the adjoints of its inputs.
// A tape is single-use per forward pass and owned by one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Records an operation. The backward closure is kept only when at least
  // one input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  // Adjoint buffer of a node, allocated on first use.
  Tensor& grad_mut(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Seeds d(root)/d(root) = 1 and runs every recorded backward closure in
  // exact reverse order of recording. `root` must hold a single value.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  // Node ids whose backward closure ran during the last backward(), in order.
  const std::vector<std::size_t>& last_backward_order() const { return backward_order_; }

  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

}  // namespace snl
