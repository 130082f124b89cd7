#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "snl/tape.hpp"
#include "snl/tensor.hpp"

namespace snl {

// Builds a scalar computation on `tape` from parameter handles.
using ScalarComputation = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Central differences at `step` and `step/2` that disagree by more than this
  // (relative to max(1,|d|)) indicate a kink between the probe points.
  double kink_tolerance = 1e-4;
  // Forward and backward one-sided differences that disagree by more than
  // this flag a kink sitting on the probe itself.
  double one_sided_tolerance = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// The probe point sits on (or next to) a non-differentiable point.
class KinkDetected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Max over every parameter entry of |analytic - central difference| /
// max(1, |analytic|).
GradCheckResult grad_check(const ScalarComputation& f, std::vector<Tensor> params,
                           const GradCheckOptions& options = {});

// Draws parameters from `sample` until a probe away from kinks is found.
GradCheckResult grad_check_sampled(const ScalarComputation& f,
                                   const std::function<std::vector<Tensor>(std::mt19937_64&)>& sample,
                                   std::mt19937_64& rng, const GradCheckOptions& options = {},
                                   int max_attempts = 20);

// Evaluates f at the given parameters without recording gradients.
double evaluate_scalar(const ScalarComputation& f, const std::vector<Tensor>& params);

}  // namespace snl
