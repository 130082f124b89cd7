#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "snl/network.hpp"

namespace snl {

struct LatencyModel {
  double t_per_1k = 0.021;    // seconds per 1000 garbled-circuit ReLUs
  double linear_time = 0.0;   // seconds, one plaintext pass of the linear layers
};

// linear_time + relu_count / 1000 * t_per_1k
double estimate_online_latency(double relu_count, const LatencyModel& model);

// linear_time that makes the model reproduce a measured (count, latency) pair.
double back_solve_linear_time(double relu_count, double latency, double t_per_1k = 0.021);

struct LatencyPoint {
  double relu_count = 0.0;
  double latency = 0.0;
};

struct LinearFit {
  double slope = 0.0;      // seconds per ReLU
  double intercept = 0.0;  // seconds
};

// Unweighted ordinary least squares. Throws std::invalid_argument when fewer
// than two distinct counts are given.
LinearFit fit_per_relu_cost(std::span<const LatencyPoint> points);

// accuracy (%) per thousand ReLUs. Throws std::invalid_argument for count <= 0.
double accuracy_per_relu(double accuracy_percent, double relu_count_k);

// Median wall-clock seconds of `repeats` batch-1 passes through the network's
// linear layers.
double measure_linear_time(const GatedNetwork& net, std::size_t repeats = 100);

// CSV with columns relu_count,latency; '#' lines are skipped.
std::vector<LatencyPoint> read_latency_points(std::istream& in);
void write_latency_estimates(std::ostream& out, std::span<const double> relu_counts,
                             const LatencyModel& model);

}  // namespace snl
