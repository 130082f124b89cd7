#include "snl/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "snl/csv.hpp"
#include "snl/seed.hpp"

namespace snl {

std::uint64_t bound_full(std::uint64_t d1, std::uint64_t d2, std::uint64_t p) {
  if (d1 == 0 || d2 == 0 || p < 2) throw std::invalid_argument("bound_full needs d1,d2 >= 1, p >= 2");
  return p * (p - 1) * d1 * d2 + (p - 1) * d2 + 2;
}

double bound_snl(double d1, double d2, double p, double alpha1, double alpha2) {
  return alpha1 * alpha2 * d1 * d2 * p * (p - 1) + alpha2 * d2 * (p - 1) +
         alpha1 * (1 - alpha2) * d1 * d2 * (p - 1) + 2;
}

double bound_pruned(double d1, double d2, double p, double alpha1, double alpha2) {
  return alpha1 * alpha2 * d1 * d2 * p * (p - 1) + alpha2 * d2 * (p - 1) + 2;
}

std::uint64_t piece_bound(std::uint64_t d1, std::uint64_t d2, std::uint64_t k1, std::uint64_t k2,
                          std::uint64_t p) {
  if (k1 > d1 || k2 > d2) throw std::invalid_argument("active units exceed layer width");
  if (p < 2) throw std::invalid_argument("p must be >= 2");
  return k1 * k2 * p * (p - 1) + k2 * (p - 1) + k1 * (d2 - k2) * (p - 1) + 1;
}

Alphas optimal_alphas(double d1, double d2, double budget) {
  if (!(d1 > 0 && d2 > 0)) throw std::invalid_argument("widths must be positive");
  if (!(budget > d2)) throw InteriorSolutionError("interior-solution hypothesis violated: B <= d2");
  Alphas a{(budget + d2 - 1) / (2 * d1), (budget - d2 + 1) / (2 * d2)};
  if (a.alpha1 < 0 || a.alpha1 > 1 || a.alpha2 < 0 || a.alpha2 > 1)
    throw InteriorSolutionError("interior-solution hypothesis violated: maximizer outside [0,1]^2");
  return a;
}

namespace {

double allocation_objective(std::size_t d1, std::size_t d2, double k1, double k2) {
  return bound_snl(static_cast<double>(d1), static_cast<double>(d2), 2.0, k1 / static_cast<double>(d1),
                   k2 / static_cast<double>(d2));
}

struct K1Range {
  std::size_t lo, hi;
};

K1Range feasible_k1(std::size_t d1, std::size_t d2, std::size_t budget) {
  if (budget > d1 + d2) throw std::invalid_argument("budget exceeds d1 + d2");
  return {budget > d2 ? budget - d2 : 0, std::min(d1, budget)};
}

}  // namespace

Allocation closed_form_allocation(std::size_t d1, std::size_t d2, std::size_t budget) {
  const double k1 = (static_cast<double>(budget) + static_cast<double>(d2) - 1) / 2;
  const double k2 = static_cast<double>(budget) - k1;
  return {k1, k2, allocation_objective(d1, d2, k1, k2)};
}

Allocation rounded_closed_form(std::size_t d1, std::size_t d2, std::size_t budget) {
  const K1Range r = feasible_k1(d1, d2, budget);
  const double k1 = std::clamp(std::round(closed_form_allocation(d1, d2, budget).k1),
                               static_cast<double>(r.lo), static_cast<double>(r.hi));
  const double k2 = static_cast<double>(budget) - k1;
  return {k1, k2, allocation_objective(d1, d2, k1, k2)};
}

std::vector<Allocation> grid_search_allocation(std::size_t d1, std::size_t d2, std::size_t budget) {
  const K1Range r = feasible_k1(d1, d2, budget);
  std::vector<Allocation> best;
  for (std::size_t k1 = r.lo; k1 <= r.hi; ++k1) {
    const auto k2 = static_cast<double>(budget - k1);
    const Allocation a{static_cast<double>(k1), k2,
                       allocation_objective(d1, d2, static_cast<double>(k1), k2)};
    if (best.empty() || a.objective > best.front().objective) {
      best = {a};
    } else if (a.objective == best.front().objective) {
      best.push_back(a);
    }
  }
  return best;
}

double lattice_step(std::size_t d1, std::size_t d2, std::size_t budget, std::size_t k1) {
  const K1Range r = feasible_k1(d1, d2, budget);
  auto f = [&](std::size_t k) {
    return allocation_objective(d1, d2, static_cast<double>(k), static_cast<double>(budget - k));
  };
  double step = 0.0;
  if (k1 > r.lo) step = std::max(step, std::abs(f(k1) - f(k1 - 1)));
  if (k1 < r.hi) step = std::max(step, std::abs(f(k1 + 1) - f(k1)));
  return step;
}

namespace {

struct Activation {
  bool plain_relu = false;
  const GateVector* gate = nullptr;

  bool kinked(std::size_t i) const { return plain_relu || gate->values[i] != 0.0; }
  // Slope of the activation on the side of 0 where z lies.
  double slope(std::size_t i, double z) const {
    if (plain_relu) return z > 0 ? 1.0 : 0.0;
    const double c = gate->values[i];
    if (gate->mode == GateMode::identity) return z > 0 ? 1.0 : 1.0 - c;
    return z > 0 ? c : 0.0;
  }
};

struct TwoLayerView {
  const Tensor *w1, *b1, *w2, *b2;
  Activation act1, act2;
  std::size_t in, d1, d2;
};

TwoLayerView view_of(const GatedNetwork& net) {
  const auto& layers = net.arch().layers;
  auto is_act = [](LayerKind k) { return k == LayerKind::gate || k == LayerKind::relu; };
  if (net.arch().input.size() != 1 || layers.size() != 5 || layers[0].kind != LayerKind::dense ||
      !is_act(layers[1].kind) || layers[2].kind != LayerKind::dense || !is_act(layers[3].kind) ||
      layers[4].kind != LayerKind::dense || layers[4].width != 1) {
    throw std::invalid_argument("piece counting needs dense, act, dense, act, dense(1)");
  }
  auto act_of = [&](std::size_t layer) {
    Activation a;
    if (layers[layer].kind == LayerKind::relu) {
      a.plain_relu = true;
      return a;
    }
    for (const GateVector& g : net.gates())
      if (g.layer == layer) a.gate = &g;
    return a;
  };
  const auto w = net.weights();
  return {&w[0].value, &w[1].value, &w[2].value, &w[3].value, act_of(1), act_of(3),
          net.arch().input[0], layers[0].width, layers[2].width};
}

// Adds t unless it duplicates an existing breakpoint.
void add_breakpoint(std::vector<double>& bps, double t) {
  for (double b : bps)
    if (std::abs(b - t) <= 1e-12 * std::max(1.0, std::abs(t))) return;
  bps.push_back(t);
}

}  // namespace

RayPieceCount count_pieces_ray(const GatedNetwork& net, const std::vector<double>& u, double t_lo,
                               double t_hi) {
  const TwoLayerView v = view_of(net);
  if (u.size() != v.in) throw std::invalid_argument("direction length differs from input width");
  if (!(t_lo < t_hi)) throw std::invalid_argument("empty domain");
  if (std::all_of(u.begin(), u.end(), [](double x) { return x == 0.0; }))
    throw std::invalid_argument("zero direction");

  // layer 1: z1_i(t) = a_i t + b_i
  std::vector<double> a(v.d1, 0.0), b(v.d1, 0.0);
  for (std::size_t i = 0; i < v.d1; ++i) {
    for (std::size_t k = 0; k < v.in; ++k) a[i] += u[k] * (*v.w1)[k * v.d1 + i];
    b[i] = (*v.b1)[i];
  }
  std::vector<double> layer1;
  for (std::size_t i = 0; i < v.d1; ++i) {
    if (!v.act1.kinked(i) || a[i] == 0.0) continue;
    const double t = -b[i] / a[i];
    if (t > t_lo && t < t_hi) add_breakpoint(layer1, t);
  }
  std::sort(layer1.begin(), layer1.end());

  RayPieceCount out;
  out.t_lo = t_lo;
  out.t_hi = t_hi;
  std::vector<double> all = layer1;
  std::vector<double> edges{t_lo};
  edges.insert(edges.end(), layer1.begin(), layer1.end());
  edges.push_back(t_hi);
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    const double lo = edges[s], hi = edges[s + 1];
    const double mid = 0.5 * (lo + hi);
    // z2_j(t) = A_j t + B_j on this segment
    std::vector<double> A(v.d2, 0.0), B(v.d2, 0.0);
    for (std::size_t i = 0; i < v.d1; ++i) {
      const double slope = v.act1.slope(i, a[i] * mid + b[i]);
      if (slope == 0.0) continue;
      for (std::size_t j = 0; j < v.d2; ++j) {
        A[j] += slope * a[i] * (*v.w2)[i * v.d2 + j];
        B[j] += slope * b[i] * (*v.w2)[i * v.d2 + j];
      }
    }
    for (std::size_t j = 0; j < v.d2; ++j) {
      if (!v.act2.kinked(j) || A[j] == 0.0) continue;
      const double t = -(B[j] + (*v.b2)[j]) / A[j];
      if (t > lo && t < hi) add_breakpoint(all, t);
    }
  }
  std::sort(all.begin(), all.end());
  out.breakpoints = std::move(all);
  return out;
}

double max_secant_error(const GatedNetwork& net, const std::vector<double>& u,
                        const RayPieceCount& count) {
  std::vector<double> edges{count.t_lo};
  edges.insert(edges.end(), count.breakpoints.begin(), count.breakpoints.end());
  edges.push_back(count.t_hi);
  const std::size_t pieces = edges.size() - 1, n = u.size();
  // rows: left, mid, right of each piece
  Tensor x({3 * pieces, n}, 0.0);
  for (std::size_t p = 0; p < pieces; ++p) {
    const double ts[3] = {edges[p], 0.5 * (edges[p] + edges[p + 1]), edges[p + 1]};
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t k = 0; k < n; ++k) x[(3 * p + r) * n + k] = ts[r] * u[k];
  }
  const Tensor f = net.predict(x);
  double worst = 0.0;
  for (std::size_t p = 0; p < pieces; ++p) {
    const double secant = 0.5 * (f[3 * p] + f[3 * p + 2]);
    const double fm = f[3 * p + 1];
    worst = std::max(worst, std::abs(fm - secant) / std::max(1.0, std::abs(fm)));
  }
  return worst;
}

GatedNetwork random_two_layer_net(std::size_t in, std::size_t d1, std::size_t d2, std::size_t k1,
                                  std::size_t k2, std::uint64_t seed) {
  if (k1 > d1 || k2 > d2) throw std::invalid_argument("active units exceed layer width");
  GatedNetwork net(ArchSpec::mlp({in, d1, d2, 1}));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Parameter& p : net.weights())
    for (double& w : p.value.values()) w = normal(rng);
  const std::size_t keep[2] = {k1, k2};
  for (std::size_t g = 0; g < 2; ++g) {
    GateVector& gv = net.gates()[g];
    std::vector<std::size_t> order(gv.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    gv.values.fill(0.0);
    for (std::size_t i = 0; i < keep[g]; ++i) gv.values[order[i]] = 1.0;
  }
  return net;
}

void VerifyReport::write_csv(std::ostream& out) const {
  write_csv_header(out, "capacity_verify", 1,
                   {"trial", "seed", "d1", "d2", "alpha1", "alpha2", "pieces", "bound"});
  for (const VerifyRow& r : rows) {
    write_csv_row(out, {std::to_string(r.trial), std::to_string(r.seed), std::to_string(r.d1),
                        std::to_string(r.d2), csv_number(r.alpha1), csv_number(r.alpha2),
                        std::to_string(r.pieces), std::to_string(r.bound)});
  }
}

VerifyReport verify_capacity_bounds(const VerifyOptions& o) {
  if (o.d_min == 0 || o.d_min > o.d_max || o.in_max == 0)
    throw std::invalid_argument("bad size range");
  if (o.alpha1 > 1.0 || o.alpha2 > 1.0) throw std::invalid_argument("alpha must be <= 1");
  VerifyReport report;
  for (std::size_t trial = 0; trial < o.trials; ++trial) {
    VerifyRow row;
    row.trial = trial;
    row.seed = mix_seed(o.seed, trial);
    std::mt19937_64 rng(row.seed);
    std::uniform_int_distribution<std::size_t> width(o.d_min, o.d_max), in_dim(1, o.in_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    row.d1 = width(rng);
    row.d2 = width(rng);
    const std::size_t in = in_dim(rng);
    row.alpha1 = o.alpha1 < 0 ? unit(rng) : o.alpha1;
    row.alpha2 = o.alpha2 < 0 ? unit(rng) : o.alpha2;
    const auto k1 = static_cast<std::size_t>(std::floor(row.alpha1 * static_cast<double>(row.d1)));
    const auto k2 = static_cast<std::size_t>(std::floor(row.alpha2 * static_cast<double>(row.d2)));
    std::vector<double> u(in);
    for (double& x : u) x = normal(rng);
    const GatedNetwork net = random_two_layer_net(in, row.d1, row.d2, k1, k2, rng());

    const RayPieceCount count = count_pieces_ray(net, u, -o.t_range, o.t_range);
    row.pieces = count.pieces();
    row.bound = piece_bound(row.d1, row.d2, k1, k2);
    row.secant_error = max_secant_error(net, u, count);
    const bool violation = row.pieces > row.bound;
    const bool inexact = row.secant_error > o.secant_tolerance;
    if ((violation || inexact) && report.violations == 0 && report.secant_failures == 0)
      report.first_bad_seed = row.seed;
    report.violations += violation;
    report.secant_failures += inexact;
    report.max_ratio = std::max(report.max_ratio, static_cast<double>(row.pieces) / static_cast<double>(row.bound));
    report.rows.push_back(row);
  }
  return report;
}

SawtoothProbe sawtooth_probe() {
  GatedNetwork net(ArchSpec::mlp({1, 2, 2, 1}));
  auto w = net.weights();
  // tent h(t) = 2 relu(t) - 4 relu(t - 1/2), then the same construction on h
  w[0].value = Tensor({1, 2}, {1.0, 1.0});
  w[1].value = Tensor({2}, {0.0, -0.5});
  w[2].value = Tensor({2, 2}, {2.0, 2.0, -4.0, -4.0});
  w[3].value = Tensor({2}, {0.0, -0.5});
  w[4].value = Tensor({2, 1}, {2.0, -4.0});
  w[5].value = Tensor({1}, {0.0});
  const std::vector<double> u{1.0};
  const RayPieceCount count = count_pieces_ray(net, u, -0.5, 1.5);
  SawtoothProbe probe;
  probe.pieces = count.pieces();
  probe.bound = piece_bound(2, 2, 2, 2);
  probe.ratio = static_cast<double>(probe.pieces) / static_cast<double>(probe.bound);
  probe.secant_error = max_secant_error(net, u, count);
  return probe;
}

}  // namespace snl
