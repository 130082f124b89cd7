#include "snl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace snl {

namespace {

double full_grad(const ParamRef& p, std::size_t i) {
  const double w = (*p.value)[i];
  return (*p.grad)[i] + p.weight_decay * w + p.l1 * sign0(w);
}

void apply_mask(const ParamRef& p) {
  if (p.mask == nullptr || p.mask->empty()) return;
  for (std::size_t i = 0; i < p.value->numel(); ++i)
    if ((*p.mask)[i] == 0.0) (*p.value)[i] = 0.0;
}

void check_state(std::vector<Tensor>& state, const std::vector<ParamRef>& params) {
  if (state.empty()) {
    for (const ParamRef& p : params) state.emplace_back(p.value->shape(), 0.0);
    return;
  }
  if (state.size() != params.size()) throw std::logic_error("optimizer parameter list changed");
}

}  // namespace

void Sgd::step(const std::vector<ParamRef>& params) {
  check_state(velocity_, params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    Tensor& vel = velocity_[k];
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      vel[i] = options_.momentum * vel[i] + full_grad(p, i);
      (*p.value)[i] -= options_.lr * vel[i];
    }
    apply_mask(p);
  }
}

void Adam::step(const std::vector<ParamRef>& params) {
  check_state(m_, params);
  check_state(v_, params);
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      const double g = full_grad(p, i);
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      (*p.value)[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
    apply_mask(p);
  }
}

}  // namespace snl
