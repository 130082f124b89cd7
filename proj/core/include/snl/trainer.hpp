#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "snl/dataset.hpp"
#include "snl/network.hpp"
#include "snl/optim.hpp"

namespace snl {

struct KdConfig {
  bool enabled = true;
  double temperature = 4.0;
  double hard_weight = 0.5;
  double soft_weight = 0.5;
};

struct SnlConfig {
  double lambda0 = 1e-5;
  double kappa = 1.1;
  double epsilon = 0.01;
  std::size_t budget = 0;  // ReLU operations
  AdamOptions joint{};
  SgdOptions finetune{1e-3, 0.9};
  std::size_t finetune_epochs = 10;
  KdConfig kd{};
  std::size_t max_epochs = 500;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  // Off: lambda stays at lambda0 for the whole joint phase.
  bool schedule_enabled = true;
  // Clamp relaxed gates to [0,1] after each step.
  bool clip_gates = false;
  double gate_weight_decay = 0.0;

  // Throws std::invalid_argument on a bad field.
  void validate() const;
};

struct PretrainConfig {
  std::size_t epochs = 40;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // Empty: decay at epochs/2 and 3*epochs/4.
  std::vector<std::size_t> milestones;
  double gamma = 0.1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

enum class TrainStatus { completed, budget_reached, max_epochs, diverged };
std::string to_string(TrainStatus s);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double test_acc = 0.0;
  std::size_t relu_count = 0;
  double lambda = 0.0;
  std::string phase;  // pretrain | init | joint | finetune
};

struct TrainReport {
  TrainStatus status = TrainStatus::completed;
  std::vector<EpochRecord> records;
  double final_accuracy = 0.0;
  // Joint-phase epochs that ran.
  std::size_t joint_epochs = 0;

  void write_csv(std::ostream& out) const;
  std::string csv() const;
};

struct TrainResult {
  GatedNetwork net;
  TrainReport report;
};

// Fraction of correct argmax predictions. Throws on an empty dataset.
double evaluate(const GatedNetwork& net, const Dataset& data);

// Dense training with SGD + momentum + weight decay and step decay. Gates are
// not trained.
TrainResult pretrain(GatedNetwork net, const DatasetSplit& data, const PretrainConfig& cfg);

struct LassoValue {
  double value = 0.0;
  std::vector<Tensor> subgradient;  // one per gate vector
};
// Sum of |c| over every gate entry; subgradient sign(c) with sign(0) = 0.
LassoValue lasso_penalty(std::span<const GateVector> gates);

// kappa * lambda when the count did not decrease, else lambda.
double lambda_step(double lambda, std::size_t count_now, std::size_t count_prev, double kappa);

// Joint Adam on weights and gates with an l1 penalty on the gates, lambda
// homotopy, then binarize, freeze and finetune. `teacher` defaults to the input
// network.
TrainResult snl_run(GatedNetwork net, const DatasetSplit& data, const SnlConfig& cfg,
                    const GatedNetwork* teacher = nullptr);

// SGD finetune of a frozen-gate student with optional distillation. Appends
// "finetune" records to `report` when given.
GatedNetwork finetune_kd(GatedNetwork student, const GatedNetwork* teacher,
                         const DatasetSplit& data, const SnlConfig& cfg,
                         TrainReport* report = nullptr);

// Keeps the top round(keep_fraction * n) (at least one) of channels (units) of every gated
// layer by incoming l1 norm, removes the rest, then finetunes.
TrainResult prune_baseline(GatedNetwork net, double keep_fraction, const DatasetSplit& data,
                           const SnlConfig& cfg, const GatedNetwork* teacher = nullptr);

}  // namespace snl
