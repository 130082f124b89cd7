#include "snl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "snl/checkpoint.hpp"
#include "snl/csv.hpp"
#include "snl/seed.hpp"

namespace snl {

namespace {

// Runs task(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string teacher_key(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::ostringstream s;
  const DatasetSpec& d = cfg.dataset;
  const PretrainConfig& p = cfg.pretrain;
  s << cfg.arch.to_string() << '|' << to_string(d.kind) << ',' << d.n << ',' << csv_number(d.noise)
    << ',' << d.seed << ',' << csv_number(d.test_fraction) << ',' << d.train_path.string() << ','
    << d.test_path.string() << '|' << p.epochs << ',' << csv_number(p.lr) << ','
    << csv_number(p.momentum) << ',' << csv_number(p.weight_decay) << ',' << csv_number(p.gamma)
    << ',' << p.batch_size;
  for (std::size_t m : p.milestones) s << ',' << m;
  s << '|' << seed;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.str())));
  return std::string("seed") + std::to_string(seed) + "_" + buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::snl: return "snl";
    case Variant::snl_zero_out: return "snl-zero-out";
    case Variant::snl_scratch: return "snl-scratch";
    case Variant::prune_baseline: return "prune-baseline";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (Variant v : {Variant::snl, Variant::snl_zero_out, Variant::snl_scratch, Variant::prune_baseline})
    if (text == to_string(v)) return v;
  throw std::invalid_argument("unknown variant '" + std::string(text) + "'");
}

std::size_t Budget::resolve(std::size_t total) const {
  if (!fraction) return static_cast<std::size_t>(value);
  return static_cast<std::size_t>(std::floor(value * static_cast<double>(total) + 1e-9));
}

Budget Budget::parse(std::string_view text) {
  if (text.empty()) throw std::invalid_argument("empty budget");
  Budget b;
  std::string body(text);
  if (body.back() == '%') {
    b.fraction = true;
    body.pop_back();
  }
  if (body.empty()) throw std::invalid_argument("bad budget '" + std::string(text) + "'");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(body, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != body.size() || !(v >= 0.0) || (b.fraction && v > 100.0) ||
      (!b.fraction && v != std::floor(v)))
    throw std::invalid_argument("bad budget '" + std::string(text) + "'");
  b.value = b.fraction ? v / 100.0 : v;
  return b;
}

std::string Budget::to_string() const {
  return fraction ? csv_number(value * 100.0) + "%" : std::to_string(static_cast<std::size_t>(value));
}

std::vector<std::size_t> ExperimentConfig::resolved_budgets() const {
  const std::size_t total = GatedNetwork(arch).total_relu_ops();
  std::vector<std::size_t> out;
  for (const Budget& b : budgets) out.push_back(b.resolve(total));
  return out;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("seeds must be nonempty");
  if (budgets.empty()) throw std::invalid_argument("budgets must be nonempty");
  if (variants.empty()) throw std::invalid_argument("variants must be nonempty");
  const auto b = resolved_budgets();
  if (!std::is_sorted(b.begin(), b.end())) throw std::invalid_argument("budgets must be ascending");
  if (workers == 0) throw std::invalid_argument("workers must be > 0");
  SnlConfig probe = snl;
  probe.validate();
}

std::vector<RetentionRow> layer_retention_report(const GatedNetwork& net) {
  if (!net.gates_binary()) throw std::logic_error("retention report needs binarized gates");
  std::vector<RetentionRow> rows;
  for (const GateLayerInfo& info : net.gate_layers()) {
    const GateVector& g = net.gates()[info.gate_index];
    std::size_t kept = 0;
    for (double v : g.values.values()) kept += v == 1.0;
    RetentionRow r;
    r.gate_index = info.gate_index;
    r.layer = info.layer;
    r.relu_before = g.relu_ops();
    r.relu_after = kept * g.fanout;
    r.fraction = static_cast<double>(r.relu_after) / static_cast<double>(r.relu_before);
    rows.push_back(r);
  }
  return rows;
}

void SweepResult::write_pareto_csv(std::ostream& out) const {
  write_csv_header(out, "pareto", 1,
                   {"budget", "variant", "seed", "status", "relu_count", "test_acc", "latency",
                    "joint_epochs", "error"});
  for (const ParetoPoint& p : points) {
    std::string err = p.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    write_csv_row(out, {std::to_string(p.budget), to_string(p.variant), std::to_string(p.seed), p.status,
                        std::to_string(p.relu_count), csv_number(p.test_acc), csv_number(p.latency),
                        std::to_string(p.joint_epochs), err});
  }
}

void SweepResult::write_retention_csv(std::ostream& out) const {
  write_csv_header(out, "retention", 1,
                   {"budget", "variant", "seed", "gate_index", "layer", "relu_before", "relu_after",
                    "fraction"});
  for (const SweepRetentionRow& r : retention) {
    write_csv_row(out, {std::to_string(r.budget), to_string(r.variant), std::to_string(r.seed),
                        std::to_string(r.row.gate_index), std::to_string(r.row.layer),
                        std::to_string(r.row.relu_before), std::to_string(r.row.relu_after),
                        csv_number(r.row.fraction)});
  }
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t budget, Variant variant) {
  return mix_seed(mix_seed(seed, budget), static_cast<std::uint64_t>(variant));
}

GatedNetwork pretrained_teacher(const ExperimentConfig& cfg, std::uint64_t seed,
                                const DatasetSplit& data, double* accuracy) {
  std::filesystem::path cache;
  if (!cfg.output_dir.empty()) {
    cache = cfg.output_dir / "teachers" / (teacher_key(cfg, seed) + ".ckpt");
    if (std::filesystem::exists(cache)) {
      Checkpoint ck = load_checkpoint(cache);
      if (ck.net.arch() == cfg.arch && ck.meta.seed == seed) {
        if (accuracy) *accuracy = evaluate(ck.net, data.test);
        return std::move(ck.net);
      }
    }
  }
  PretrainConfig pc = cfg.pretrain;
  pc.seed = seed;
  TrainResult r = pretrain(GatedNetwork::build(cfg.arch, mix_seed(seed, 0x7eac)), data, pc);
  if (r.report.status == TrainStatus::diverged) throw std::runtime_error("teacher pretraining diverged");
  if (!cache.empty()) {
    std::filesystem::create_directories(cache.parent_path());
    save_checkpoint(r.net, cache, {seed, cfg.pretrain.epochs, 0.0});
  }
  if (accuracy) *accuracy = r.report.final_accuracy;
  return std::move(r.net);
}

TrainResult run_variant(const GatedNetwork& teacher, const DatasetSplit& data,
                        const ExperimentConfig& cfg, std::size_t budget, Variant variant,
                        std::uint64_t seed) {
  SnlConfig sc = cfg.snl;
  sc.budget = budget;
  sc.seed = seed;
  switch (variant) {
    case Variant::snl:
    case Variant::snl_zero_out: {
      GatedNetwork net = teacher;
      net.set_gate_mode(variant == Variant::snl ? GateMode::identity : GateMode::zero_out);
      return snl_run(std::move(net), data, sc, &teacher);
    }
    case Variant::snl_scratch: {
      GatedNetwork net = GatedNetwork::build(teacher.arch(), seed);
      net.set_gate_mode(GateMode::identity);
      return snl_run(std::move(net), data, sc, &teacher);
    }
    case Variant::prune_baseline: {
      const double total = static_cast<double>(teacher.total_relu_ops());
      return prune_baseline(teacher, std::min(1.0, static_cast<double>(budget) / total), data, sc,
                            &teacher);
    }
  }
  throw std::invalid_argument("bad variant");
}

SweepResult run_pareto_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const DatasetSplit data = load_dataset(cfg.dataset);
  const std::vector<std::size_t> budgets = cfg.resolved_budgets();

  SweepResult result;
  std::vector<std::optional<GatedNetwork>> teachers(cfg.seeds.size());
  std::vector<std::string> teacher_error(cfg.seeds.size());
  result.teacher_accuracy.assign(cfg.seeds.size(), 0.0);
  parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    try {
      teachers[i] = pretrained_teacher(cfg, cfg.seeds[i], data, &result.teacher_accuracy[i]);
    } catch (const std::exception& e) {
      teacher_error[i] = e.what();
    }
  });

  struct Cell {
    std::size_t budget, seed_index;
    Variant variant;
  };
  std::vector<Cell> cells;
  for (std::size_t b : budgets)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
      for (Variant v : cfg.variants) cells.push_back({b, s, v});

  std::vector<ParetoPoint> points(cells.size());
  std::vector<std::vector<RetentionRow>> retention(cells.size());
  std::vector<std::string> reports(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    const Cell& c = cells[i];
    ParetoPoint& p = points[i];
    p.budget = c.budget;
    p.variant = c.variant;
    p.seed = cfg.seeds[c.seed_index];
    try {
      if (!teachers[c.seed_index]) throw std::runtime_error("teacher: " + teacher_error[c.seed_index]);
      TrainResult r = run_variant(*teachers[c.seed_index], data, cfg, c.budget, c.variant,
                                  cell_seed(p.seed, c.budget, c.variant));
      p.status = to_string(r.report.status);
      p.relu_count = r.net.relu_count(cfg.snl.epsilon);
      p.test_acc = r.report.final_accuracy;
      p.latency = estimate_online_latency(static_cast<double>(p.relu_count), cfg.latency);
      p.joint_epochs = r.report.joint_epochs;
      if (r.net.gates_binary()) retention[i] = layer_retention_report(r.net);
      reports[i] = r.report.csv();
    } catch (const std::exception& e) {
      p.status = "failed";
      p.error = e.what();
    }
  });

  result.points = std::move(points);
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (const RetentionRow& row : retention[i])
      result.retention.push_back({cells[i].budget, cells[i].variant, cfg.seeds[cells[i].seed_index], row});

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir / "runs");
    std::ostringstream pareto, ret;
    result.write_pareto_csv(pareto);
    result.write_retention_csv(ret);
    write_text(cfg.output_dir / "pareto.csv", pareto.str());
    write_text(cfg.output_dir / "retention.csv", ret.str());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (reports[i].empty()) continue;
      const ParetoPoint& p = result.points[i];
      write_text(cfg.output_dir / "runs" /
                     (to_string(p.variant) + "_B" + std::to_string(p.budget) + "_seed" +
                      std::to_string(p.seed) + ".csv"),
                 reports[i]);
    }
  }
  return result;
}

std::string to_string(AblationKind k) {
  switch (k) {
    case AblationKind::lambda_grid: return "lambda-grid";
    case AblationKind::lr_grid: return "lr-grid";
    case AblationKind::variant_compare: return "variant-compare";
  }
  return "?";
}

AblationKind parse_ablation_kind(std::string_view text) {
  for (AblationKind k : {AblationKind::lambda_grid, AblationKind::lr_grid, AblationKind::variant_compare})
    if (text == to_string(k)) return k;
  throw std::invalid_argument("unknown ablation '" + std::string(text) + "'");
}

std::size_t AblationResult::epochs_to_reach(const TrainReport& r, std::size_t threshold) {
  for (const EpochRecord& e : r.records)
    if ((e.phase == "init" || e.phase == "joint") && e.relu_count <= threshold) return e.epoch;
  return std::numeric_limits<std::size_t>::max();
}

double AblationResult::min_joint_accuracy(const TrainReport& r) {
  double lo = 1.0;
  for (const EpochRecord& e : r.records)
    if (e.phase == "joint") lo = std::min(lo, e.test_acc);
  return lo;
}

void AblationResult::write_csv(std::ostream& out) const {
  write_csv_header(out, "ablation", 1,
                   {"ablation", "cell", "seed", "status", "epoch", "phase", "loss", "test_acc",
                    "relu_count", "lambda"});
  for (const AblationCell& c : cells) {
    if (c.report.records.empty()) {
      write_csv_row(out, {to_string(kind), c.label, std::to_string(c.seed), c.status, "", "", "", "", "", ""});
      continue;
    }
    for (const EpochRecord& r : c.report.records) {
      write_csv_row(out, {to_string(kind), c.label, std::to_string(c.seed), c.status,
                          std::to_string(r.epoch), r.phase, csv_number(r.loss), csv_number(r.test_acc),
                          std::to_string(r.relu_count), csv_number(r.lambda)});
    }
  }
}

AblationResult run_ablation(const AblationSpec& spec, const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw std::invalid_argument("seeds must be nonempty");
  const bool by_variant = spec.kind == AblationKind::variant_compare;
  const std::size_t grid = by_variant ? spec.variants.size() : spec.values.size();
  if (grid == 0) throw std::invalid_argument("ablation grid is empty");
  cfg.snl.validate();
  const DatasetSplit data = load_dataset(cfg.dataset);

  std::vector<std::optional<GatedNetwork>> teachers(cfg.seeds.size());
  std::vector<std::string> teacher_error(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    try {
      teachers[i] = pretrained_teacher(cfg, cfg.seeds[i], data);
    } catch (const std::exception& e) {
      teacher_error[i] = e.what();
    }
  });

  AblationResult result;
  result.kind = spec.kind;
  result.cells.resize(grid * cfg.seeds.size());
  parallel_for(result.cells.size(), cfg.workers, [&](std::size_t i) {
    const std::size_t g = i / cfg.seeds.size(), s = i % cfg.seeds.size();
    AblationCell& cell = result.cells[i];
    cell.seed = cfg.seeds[s];
    ExperimentConfig local = cfg;
    Variant variant = Variant::snl;
    if (by_variant) {
      variant = spec.variants[g];
      cell.label = to_string(variant);
    } else {
      cell.label = csv_number(spec.values[g]);
      if (spec.kind == AblationKind::lambda_grid) {
        local.snl.lambda0 = spec.values[g];
        local.snl.schedule_enabled = false;
      } else {
        local.snl.joint.lr = spec.values[g];
      }
    }
    try {
      if (!teachers[s]) throw std::runtime_error("teacher: " + teacher_error[s]);
      TrainResult r = run_variant(*teachers[s], data, local, spec.budget, variant,
                                  cell_seed(cell.seed, spec.budget, variant));
      cell.status = to_string(r.report.status);
      cell.report = std::move(r.report);
    } catch (const std::exception& e) {
      cell.status = "failed";
      cell.error = e.what();
    }
  });
  return result;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two equal-length series");
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace snl
