#pragma once

#include <cstddef>
#include <vector>

#include "snl/tensor.hpp"

namespace snl {

// One optimizable buffer. `mask` may be null or empty; masked entries are
// forced back to zero after every step.
struct ParamRef {
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
  const Tensor* mask = nullptr;
  double weight_decay = 0.0;
  // Added to the gradient: l1 * sign(value), sign(0) = 0.
  double l1 = 0.0;
};

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
};

class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  void step(const std::vector<ParamRef>& params);

 private:
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}
  void step(const std::vector<ParamRef>& params);
  std::size_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

// sign with sign(0) = 0
inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace snl
