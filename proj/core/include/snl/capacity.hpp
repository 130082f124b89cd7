#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "snl/network.hpp"

namespace snl {

// Memorization-capacity bounds for a two-hidden-layer network of widths d1, d2
// whose activations have p linear pieces.
std::uint64_t bound_full(std::uint64_t d1, std::uint64_t d2, std::uint64_t p);
// alpha1, alpha2: fraction of each layer's activations kept nonlinear.
double bound_snl(double d1, double d2, double p, double alpha1, double alpha2);
double bound_pruned(double d1, double d2, double p, double alpha1, double alpha2);

// Linear pieces along a ray with k1, k2 nonlinear units (bound_snl - 1 with
// alpha_l = k_l / d_l).
std::uint64_t piece_bound(std::uint64_t d1, std::uint64_t d2, std::uint64_t k1, std::uint64_t k2,
                          std::uint64_t p = 2);

class InteriorSolutionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Alphas {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

// Maximizer of bound_snl at p = 2 under alpha1*d1 + alpha2*d2 = B. Throws
// InteriorSolutionError when B <= d2 or the maximizer leaves [0,1]^2.
Alphas optimal_alphas(double d1, double d2, double budget);

// Integer allocation of B nonlinear units between the two layers.
struct Allocation {
  double k1 = 0.0;
  double k2 = 0.0;
  double objective = 0.0;  // bound_snl at p = 2
};

// Unconstrained stationary point k1 = (B + d2 - 1) / 2, possibly infeasible.
Allocation closed_form_allocation(std::size_t d1, std::size_t d2, std::size_t budget);
// Closed form clamped to the feasible k1 range, then rounded to the lattice.
Allocation rounded_closed_form(std::size_t d1, std::size_t d2, std::size_t budget);
// Exhaustive search over integer k1 (k2 = B - k1). Returns every maximizer.
std::vector<Allocation> grid_search_allocation(std::size_t d1, std::size_t d2, std::size_t budget);
// Largest objective change between the rounded allocation and a lattice
// neighbour.
double lattice_step(std::size_t d1, std::size_t d2, std::size_t budget, std::size_t k1);

struct RayPieceCount {
  std::vector<double> breakpoints;  // strictly increasing, inside (t_lo, t_hi)
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::size_t pieces() const { return breakpoints.size() + 1; }
};

// Exact breakpoint enumeration of t -> f(t u) for a network of the form
// dense, act, dense, act, dense(1) where act is a gate or a plain ReLU.
RayPieceCount count_pieces_ray(const GatedNetwork& net, const std::vector<double>& u, double t_lo,
                               double t_hi);

// Max over pieces of |f(mid) - secant(mid)| / max(1, |f(mid)|), using the
// network's own forward pass.
double max_secant_error(const GatedNetwork& net, const std::vector<double>& u,
                        const RayPieceCount& count);

// Identity-mode gated network in -> d1 -> d2 -> 1 with N(0,1) weights and
// biases; the first k1 / k2 entries of a random permutation keep their ReLU.
GatedNetwork random_two_layer_net(std::size_t in, std::size_t d1, std::size_t d2, std::size_t k1,
                                  std::size_t k2, std::uint64_t seed);

struct VerifyOptions {
  std::size_t trials = 500;
  std::size_t d_min = 1;
  std::size_t d_max = 8;
  std::size_t in_max = 4;
  // < 0: draw alpha uniformly per trial.
  double alpha1 = -1.0;
  double alpha2 = -1.0;
  double t_range = 10.0;
  double secant_tolerance = 1e-9;
  std::uint64_t seed = 1;
};

struct VerifyRow {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t d1 = 0, d2 = 0;
  double alpha1 = 0.0, alpha2 = 0.0;
  std::size_t pieces = 0;
  std::uint64_t bound = 0;
  double secant_error = 0.0;
};

struct VerifyReport {
  std::vector<VerifyRow> rows;
  std::size_t violations = 0;
  std::size_t secant_failures = 0;
  double max_ratio = 0.0;
  // Seed of the first violating or inexact trial, if any.
  std::uint64_t first_bad_seed = 0;
  bool ok() const { return violations == 0 && secant_failures == 0; }
  void write_csv(std::ostream& out) const;
};

VerifyReport verify_capacity_bounds(const VerifyOptions& options);

// Telgarsky-style tent composition at d1 = d2 = 2 on a 1-D input.
struct SawtoothProbe {
  std::size_t pieces = 0;
  std::uint64_t bound = 0;
  double ratio = 0.0;
  double secant_error = 0.0;
};
SawtoothProbe sawtooth_probe();

}  // namespace snl
