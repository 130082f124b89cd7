#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "snl/dataset.hpp"
#include "snl/latency.hpp"
#include "snl/network.hpp"
#include "snl/trainer.hpp"

namespace snl {

enum class Variant { snl, snl_zero_out, snl_scratch, prune_baseline };
std::string to_string(Variant v);
Variant parse_variant(std::string_view text);

// Absolute ReLU count, or a fraction of the network's total when `fraction`.
struct Budget {
  double value = 0.0;
  bool fraction = false;

  std::size_t resolve(std::size_t total_relu_ops) const;
  // "120", "25%"
  static Budget parse(std::string_view text);
  std::string to_string() const;
};

struct ExperimentConfig {
  ArchSpec arch;
  DatasetSpec dataset;
  PretrainConfig pretrain;
  SnlConfig snl;
  std::vector<Budget> budgets;
  std::vector<std::uint64_t> seeds;
  std::vector<Variant> variants{Variant::snl};
  // Empty: nothing is written and no teacher cache is used.
  std::filesystem::path output_dir;
  std::size_t workers = 1;
  LatencyModel latency{};

  // Throws std::invalid_argument: empty seeds or budgets, budgets not
  // ascending once resolved, bad SnlConfig.
  void validate() const;
  std::vector<std::size_t> resolved_budgets() const;
};

struct ParetoPoint {
  std::size_t budget = 0;
  Variant variant = Variant::snl;
  std::uint64_t seed = 0;
  std::string status;  // TrainStatus name or "failed"
  std::size_t relu_count = 0;
  double test_acc = 0.0;
  double latency = 0.0;
  std::size_t joint_epochs = 0;
  std::string error;
};

struct RetentionRow {
  std::size_t gate_index = 0;
  std::size_t layer = 0;
  std::size_t relu_before = 0;
  std::size_t relu_after = 0;
  double fraction = 0.0;
};

// Per gated layer retention of a binarized network. Throws std::logic_error
// for relaxed gates.
std::vector<RetentionRow> layer_retention_report(const GatedNetwork& net);

struct SweepRetentionRow {
  std::size_t budget = 0;
  Variant variant = Variant::snl;
  std::uint64_t seed = 0;
  RetentionRow row;
};

struct SweepResult {
  std::vector<ParetoPoint> points;
  std::vector<SweepRetentionRow> retention;
  // Test accuracy of each seed's dense teacher, in seed order.
  std::vector<double> teacher_accuracy;

  void write_pareto_csv(std::ostream& out) const;
  void write_retention_csv(std::ostream& out) const;
};

// Seed of one sweep cell.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t budget, Variant variant);

// Dense teacher for one seed; reuses <output_dir>/teachers/<key>.ckpt when present.
GatedNetwork pretrained_teacher(const ExperimentConfig& cfg, std::uint64_t seed,
                                const DatasetSplit& data, double* accuracy = nullptr);

// Every (budget, seed, variant) cell in that nesting order. A failing cell is
// recorded as such and does not affect the others. Writes pareto.csv and
// retention.csv into output_dir when it is set.
SweepResult run_pareto_sweep(const ExperimentConfig& cfg);

// One cell, exposed for the CLI's single-run subcommands.
TrainResult run_variant(const GatedNetwork& teacher, const DatasetSplit& data,
                        const ExperimentConfig& cfg, std::size_t budget, Variant variant,
                        std::uint64_t seed);

enum class AblationKind { lambda_grid, lr_grid, variant_compare };
std::string to_string(AblationKind k);
AblationKind parse_ablation_kind(std::string_view text);

struct AblationSpec {
  AblationKind kind = AblationKind::lambda_grid;
  std::vector<double> values;       // lambda or learning-rate grid
  std::vector<Variant> variants;    // variant_compare
  std::size_t budget = 0;           // count threshold / budget of every cell
};

struct AblationCell {
  std::string label;  // grid value or variant name
  std::uint64_t seed = 0;
  std::string status;
  TrainReport report;
  std::string error;
};

struct AblationResult {
  AblationKind kind = AblationKind::lambda_grid;
  std::vector<AblationCell> cells;

  // Joint epochs until relu_count <= threshold, or SIZE_MAX when never.
  static std::size_t epochs_to_reach(const TrainReport& r, std::size_t threshold);
  // Lowest test accuracy among joint-phase records (1 when there are none).
  static double min_joint_accuracy(const TrainReport& r);

  void write_csv(std::ostream& out) const;
};

// lambda_grid runs with the schedule disabled and lambda0 set per cell.
AblationResult run_ablation(const AblationSpec& spec, const ExperimentConfig& cfg);

// Spearman rank correlation with average ranks for ties. NaN when either side
// is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> v);

}  // namespace snl
