#include "snl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace snl {

double evaluate_scalar(const ScalarComputation& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.constant(p));
  return f(tape, vars).value().item();
}

GradCheckResult grad_check(const ScalarComputation& f, std::vector<Tensor> params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    Var out = f(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(v.grad());
  }

  auto at = [&](std::size_t pi, std::size_t i, double x) {
    const double orig = params[pi][i];
    params[pi][i] = x;
    const double v = evaluate_scalar(f, params);
    params[pi][i] = orig;
    return v;
  };
  auto central = [&](std::size_t pi, std::size_t i, double h) {
    const double x = params[pi][i];
    return (at(pi, i, x + h) - at(pi, i, x - h)) / (2.0 * h);
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t i = 0; i < params[pi].numel(); ++i) {
      const double h = options.step;
      const double x = params[pi][i];
      const double d1 = central(pi, i, h);
      const double d2 = central(pi, i, h / 2);
      const double f0 = at(pi, i, x);
      const double forward = (at(pi, i, x + h) - f0) / h;
      const double backward = (f0 - at(pi, i, x - h)) / h;
      const double scale = std::max(1.0, std::abs(d1));
      if (std::abs(d1 - d2) > options.kink_tolerance * scale ||
          std::abs(forward - backward) > options.one_sided_tolerance * scale) {
        throw KinkDetected("finite differences unstable at parameter " + std::to_string(pi) +
                           " entry " + std::to_string(i));
      }
      const double a = analytic[pi][i];
      const double err = std::abs(a - d1) / std::max(1.0, std::abs(a));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult grad_check_sampled(const ScalarComputation& f,
                                   const std::function<std::vector<Tensor>(std::mt19937_64&)>& sample,
                                   std::mt19937_64& rng, const GradCheckOptions& options,
                                   int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    try {
      return grad_check(f, sample(rng), options);
    } catch (const KinkDetected&) {
      // re-sample
    }
  }
  throw KinkDetected("no kink-free probe after " + std::to_string(max_attempts) + " attempts");
}

}  // namespace snl
