#include "snl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "snl/csv.hpp"

namespace snl {

namespace {

constexpr std::size_t kEvalBatch = 256;

// Sample-weighted mean batch loss, or NaN once a batch loss is not finite.
// `step` builds the loss on the tape, runs backward and updates parameters.
double run_epoch(const Dataset& train, std::size_t batch_size, std::mt19937_64& rng,
                 const std::function<double(const Tensor&, std::span<const int>)>& step) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::span<const std::size_t> rows(order.data() + start, end - start);
    const Tensor x = train.batch_x(rows);
    const std::vector<int> y = train.batch_y(rows);
    double loss;
    try {
      loss = step(x, y);
    } catch (const NumericError&) {
      return std::nan("");
    }
    if (!std::isfinite(loss)) return std::nan("");
    total += loss * static_cast<double>(rows.size());
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

std::vector<ParamRef> weight_refs(GatedNetwork& net, double weight_decay) {
  std::vector<ParamRef> refs;
  for (Parameter& p : net.weights()) refs.push_back({&p.value, &p.grad, &p.mask, weight_decay, 0.0});
  return refs;
}

void check_data(const GatedNetwork& net, const DatasetSplit& data) {
  if (data.train.empty()) throw std::invalid_argument("training set is empty");
  if (data.train.sample_shape() != net.arch().input)
    throw std::invalid_argument("dataset sample shape " + shape_str(data.train.sample_shape()) +
                                " does not match network input " + shape_str(net.arch().input));
}

std::size_t last_epoch(const TrainReport& r) { return r.records.empty() ? 0 : r.records.back().epoch; }

}  // namespace

void SnlConfig::validate() const {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("lambda0 must be > 0");
  if (!(kappa > 1.0)) throw std::invalid_argument("kappa must be > 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
  if (kd.enabled) {
    if (!(kd.temperature > 0.0)) throw std::invalid_argument("KD temperature must be > 0");
    if (kd.hard_weight < 0.0 || kd.soft_weight < 0.0 ||
        std::abs(kd.hard_weight + kd.soft_weight - 1.0) > 1e-12)
      throw std::invalid_argument("KD weights must be non-negative and sum to 1");
  }
  if (!(joint.lr >= 0.0) || !(finetune.lr >= 0.0)) throw std::invalid_argument("negative learning rate");
}

std::string to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::completed: return "completed";
    case TrainStatus::budget_reached: return "budget-reached";
    case TrainStatus::max_epochs: return "max-epochs";
    case TrainStatus::diverged: return "diverged";
  }
  return "?";
}

void TrainReport::write_csv(std::ostream& out) const {
  write_csv_header(out, "train_report", 1,
                   {"epoch", "loss", "test_acc", "relu_count", "lambda", "phase"});
  for (const EpochRecord& r : records) {
    write_csv_row(out, {std::to_string(r.epoch), csv_number(r.loss), csv_number(r.test_acc),
                        std::to_string(r.relu_count), csv_number(r.lambda), r.phase});
  }
}

std::string TrainReport::csv() const {
  std::ostringstream s;
  write_csv(s);
  return s.str();
}

double evaluate(const GatedNetwork& net, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const std::size_t end = std::min(data.size(), start + kEvalBatch);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor logits = net.predict(data.batch_x(rows));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* row = logits.data() + i * k;
      const auto best = static_cast<int>(std::max_element(row, row + k) - row);
      if (best == data.y[rows[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult pretrain(GatedNetwork net, const DatasetSplit& data, const PretrainConfig& cfg) {
  check_data(net, data);
  if (cfg.batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
  std::vector<std::size_t> milestones = cfg.milestones;
  if (milestones.empty()) milestones = {cfg.epochs / 2, 3 * cfg.epochs / 4};

  TrainReport report;
  Sgd sgd({cfg.lr, cfg.momentum});
  std::mt19937_64 rng(cfg.seed);
  const ForwardOptions fwd{true, false};
  const std::size_t count = net.relu_count(net.gates().empty() ? 0.01 : net.gates()[0].epsilon);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    for (std::size_t m : milestones)
      if (m > 0 && epoch > m) lr *= cfg.gamma;
    sgd.set_lr(lr);
    const double loss = run_epoch(data.train, cfg.batch_size, rng, [&](const Tensor& x, std::span<const int> y) {
      Tape tape;
      Binding b;
      Var l = softmax_cross_entropy(net.forward(tape, x, &b, fwd), y);
      tape.backward(l);
      net.load_gradients(b);
      sgd.step(weight_refs(net, cfg.weight_decay));
      return l.value().item();
    });
    if (std::isnan(loss)) {
      report.status = TrainStatus::diverged;
      report.records.push_back({epoch, loss, 0.0, count, 0.0, "pretrain"});
      return {std::move(net), std::move(report)};
    }
    const double acc = data.test.empty() ? 0.0 : evaluate(net, data.test);
    report.records.push_back({epoch, loss, acc, count, 0.0, "pretrain"});
  }
  report.final_accuracy = data.test.empty() ? 0.0 : evaluate(net, data.test);
  return {std::move(net), std::move(report)};
}

LassoValue lasso_penalty(std::span<const GateVector> gates) {
  LassoValue out;
  for (const GateVector& g : gates) {
    Tensor sub(g.values.shape(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      out.value += std::abs(g.values[i]);
      sub[i] = sign0(g.values[i]);
    }
    out.subgradient.push_back(std::move(sub));
  }
  return out;
}

double lambda_step(double lambda, std::size_t count_now, std::size_t count_prev, double kappa) {
  if (!(kappa > 1.0)) throw std::invalid_argument("kappa must be > 1");
  return count_now >= count_prev ? kappa * lambda : lambda;
}

GatedNetwork finetune_kd(GatedNetwork student, const GatedNetwork* teacher,
                         const DatasetSplit& data, const SnlConfig& cfg, TrainReport* report) {
  if (!student.gates_frozen()) throw std::logic_error("finetune requires frozen gates");
  check_data(student, data);
  const bool use_kd = cfg.kd.enabled && teacher != nullptr;
  if (use_kd && teacher->arch().input != student.arch().input)
    throw std::invalid_argument("teacher input shape differs from student");
  const std::uint64_t hash_before = student.gate_hash();
  const std::size_t count = student.relu_count(cfg.epsilon);
  const double lambda = report && !report->records.empty() ? report->records.back().lambda : 0.0;

  Sgd sgd(cfg.finetune);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::size_t epoch = report ? last_epoch(*report) : 0;
  for (std::size_t e = 0; e < cfg.finetune_epochs; ++e) {
    const double loss = run_epoch(data.train, cfg.batch_size, rng, [&](const Tensor& x, std::span<const int> y) {
      Tape tape;
      Binding b;
      Var logits = student.forward(tape, x, &b);
      Var l = softmax_cross_entropy(logits, y);
      if (use_kd) {
        const Tensor t = teacher->predict(x);
        l = weighted_sum(l, cfg.kd.hard_weight, kl_soft_targets(logits, t, cfg.kd.temperature),
                         cfg.kd.soft_weight);
      }
      tape.backward(l);
      student.load_gradients(b);
      sgd.step(weight_refs(student, 0.0));
      return l.value().item();
    });
    ++epoch;
    if (std::isnan(loss)) {
      if (report) {
        report->status = TrainStatus::diverged;
        report->records.push_back({epoch, loss, 0.0, count, lambda, "finetune"});
      }
      break;
    }
    if (report) {
      const double acc = data.test.empty() ? 0.0 : evaluate(student, data.test);
      report->records.push_back({epoch, loss, acc, count, lambda, "finetune"});
    }
  }
  if (student.gate_hash() != hash_before) throw std::logic_error("gate vector changed during finetune");
  return student;
}

TrainResult snl_run(GatedNetwork net, const DatasetSplit& data, const SnlConfig& cfg,
                    const GatedNetwork* teacher) {
  cfg.validate();
  check_data(net, data);
  if (net.gates_frozen()) throw std::invalid_argument("snl_run needs unfrozen gates");
  for (const GateVector& g : net.gates())
    for (double v : g.values.values())
      if (v != 1.0) throw std::invalid_argument("snl_run needs every gate at 1");
  net.set_gate_epsilon(cfg.epsilon);
  const GatedNetwork teacher_copy = teacher ? GatedNetwork(net.arch()) : net;
  const GatedNetwork* kd_teacher = teacher ? teacher : &teacher_copy;

  TrainReport report;
  double lambda = cfg.lambda0;
  std::size_t count = net.relu_count(cfg.epsilon);
  std::size_t prev = count;
  report.records.push_back({0, 0.0, data.test.empty() ? 0.0 : evaluate(net, data.test), count,
                            lambda, "init"});

  Adam adam(cfg.joint);
  std::mt19937_64 rng(cfg.seed);
  std::size_t epoch = 0;
  while (count > cfg.budget && epoch < cfg.max_epochs) {
    ++epoch;
    const double loss = run_epoch(data.train, cfg.batch_size, rng, [&](const Tensor& x, std::span<const int> y) {
      Tape tape;
      Binding b;
      Var l = softmax_cross_entropy(net.forward(tape, x, &b), y);
      tape.backward(l);
      net.load_gradients(b);
      std::vector<ParamRef> refs = weight_refs(net, 0.0);
      double penalty = 0.0;
      for (GateVector& g : net.gates()) {
        refs.push_back({&g.values, &g.grad, nullptr, cfg.gate_weight_decay, lambda});
        for (double v : g.values.values()) penalty += std::abs(v);
      }
      adam.step(refs);
      if (cfg.clip_gates)
        for (GateVector& g : net.gates())
          for (double& v : g.values.values()) v = std::clamp(v, 0.0, 1.0);
      return l.value().item() + lambda * penalty;
    });
    if (std::isnan(loss)) {
      report.status = TrainStatus::diverged;
      report.joint_epochs = epoch;
      report.records.push_back({epoch, loss, 0.0, count, lambda, "joint"});
      return {std::move(net), std::move(report)};
    }
    count = net.relu_count(cfg.epsilon);
    report.records.push_back({epoch, loss, data.test.empty() ? 0.0 : evaluate(net, data.test),
                              count, lambda, "joint"});
    if (cfg.schedule_enabled) lambda = lambda_step(lambda, count, prev, cfg.kappa);
    prev = count;
  }
  report.joint_epochs = epoch;
  report.status = count <= cfg.budget ? TrainStatus::budget_reached : TrainStatus::max_epochs;

  net.binarize_gates(cfg.epsilon);
  net.freeze_gates();
  // Nothing was linearized when the loop never ran; the input network is
  // returned as is.
  if (epoch > 0) net = finetune_kd(std::move(net), kd_teacher, data, cfg, &report);
  report.final_accuracy = data.test.empty() ? 0.0 : evaluate(net, data.test);
  return {std::move(net), std::move(report)};
}

TrainResult prune_baseline(GatedNetwork net, double keep_fraction, const DatasetSplit& data,
                           const SnlConfig& cfg, const GatedNetwork* teacher) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("keep_fraction must be in (0,1]");
  check_data(net, data);
  const GatedNetwork teacher_copy = teacher ? GatedNetwork(net.arch()) : net;
  const GatedNetwork* kd_teacher = teacher ? teacher : &teacher_copy;

  TrainReport report;
  report.records.push_back({0, 0.0, data.test.empty() ? 0.0 : evaluate(net, data.test),
                            net.relu_count(cfg.epsilon), 0.0, "init"});
  if (keep_fraction < 1.0) {
    for (std::size_t gi = 0; gi < net.gates().size(); ++gi) {
      const std::vector<double> l1 = net.channel_incoming_l1(gi);
      const std::size_t n = l1.size();
      const auto keep_n = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(n))));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return l1[a] > l1[b]; });
      std::vector<bool> keep(n, false);
      for (std::size_t i = 0; i < std::min(keep_n, n); ++i) keep[order[i]] = true;
      net.prune_channels(gi, keep);
    }
  }
  net.set_gate_epsilon(cfg.epsilon);
  net.binarize_gates(cfg.epsilon);
  net.freeze_gates();
  if (keep_fraction < 1.0) net = finetune_kd(std::move(net), kd_teacher, data, cfg, &report);
  report.status = TrainStatus::completed;
  report.final_accuracy = data.test.empty() ? 0.0 : evaluate(net, data.test);
  return {std::move(net), std::move(report)};
}

}  // namespace snl
