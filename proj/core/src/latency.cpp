#include "snl/latency.hpp"

#include <algorithm>
#include <chrono>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "snl/csv.hpp"

namespace snl {

double estimate_online_latency(double relu_count, const LatencyModel& model) {
  if (relu_count < 0) throw std::invalid_argument("relu_count must be >= 0");
  if (model.t_per_1k < 0 || model.linear_time < 0)
    throw std::invalid_argument("latency model terms must be >= 0");
  return model.linear_time + relu_count / 1000.0 * model.t_per_1k;
}

double back_solve_linear_time(double relu_count, double latency, double t_per_1k) {
  return latency - relu_count / 1000.0 * t_per_1k;
}

LinearFit fit_per_relu_cost(std::span<const LatencyPoint> points) {
  if (points.size() < 2) throw std::invalid_argument("need at least two points");
  double mx = 0.0, my = 0.0;
  for (const LatencyPoint& p : points) {
    mx += p.relu_count;
    my += p.latency;
  }
  const auto n = static_cast<double>(points.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const LatencyPoint& p : points) {
    sxx += (p.relu_count - mx) * (p.relu_count - mx);
    sxy += (p.relu_count - mx) * (p.latency - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("degenerate fit: all relu counts are equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

double accuracy_per_relu(double accuracy_percent, double relu_count_k) {
  if (!(relu_count_k > 0)) throw std::invalid_argument("relu count must be > 0");
  return accuracy_percent / relu_count_k;
}

double measure_linear_time(const GatedNetwork& net, std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("repeats must be > 0");
  Shape in{1};
  in.insert(in.end(), net.arch().input.begin(), net.arch().input.end());
  const Tensor x(in, 0.5);
  std::vector<double> times;
  times.reserve(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor y = net.forward_linear_only(x);
    const auto stop = std::chrono::steady_clock::now();
    if (y.empty()) throw std::logic_error("empty linear output");
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  return times[times.size() / 2];
}

std::vector<LatencyPoint> read_latency_points(std::istream& in) {
  std::vector<LatencyPoint> points;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("relu_count,latency", 0) != 0)
        throw std::invalid_argument("expected header 'relu_count,latency'");
      header = true;
      continue;
    }
    std::istringstream row(line);
    LatencyPoint p;
    char comma = 0;
    if (!(row >> p.relu_count >> comma >> p.latency) || comma != ',')
      throw std::invalid_argument("malformed latency row at line " + std::to_string(line_no));
    points.push_back(p);
  }
  return points;
}

void write_latency_estimates(std::ostream& out, std::span<const double> relu_counts,
                             const LatencyModel& model) {
  write_csv_header(out, "latency_estimate", 1, {"relu_count", "linear_time", "t_per_1k", "latency"});
  for (double c : relu_counts) {
    write_csv_row(out, {csv_number(c), csv_number(model.linear_time), csv_number(model.t_per_1k),
                        csv_number(estimate_online_latency(c, model))});
  }
}

}  // namespace snl
