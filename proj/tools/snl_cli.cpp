// snl: command-line front end for training, sweeps and the analysis tools.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "snl/capacity.hpp"
#include "snl/checkpoint.hpp"
#include "snl/csv.hpp"
#include "snl/experiment.hpp"
#include "snl/latency.hpp"

namespace {

using namespace snl;

enum Exit : int { kOk = 0, kConfigError = 1, kRunFailure = 2, kInvariant = 3 };

// Thrown when a run finished but broke one of its contracts.
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string arch = "gates=per-unit,identity;in=1x8x8;conv=4,3,1,1;relu;conv=8,3,1,1;gate;flatten;dense=2";
  std::string dataset = "oriented-bars";
  std::size_t n = 1000;
  double noise = 0.5;
  std::uint64_t data_seed = 7;
  double test_fraction = 0.25;
  std::string train_file, test_file;
  std::size_t classes = 0;

  std::size_t pretrain_epochs = 40;
  double pretrain_lr = 0.1;

  double lambda0 = 1e-5, kappa = 1.1, epsilon = 0.01, adam_lr = 1e-3, finetune_lr = 1e-3;
  std::size_t finetune_epochs = 10, max_epochs = 500, batch_size = 64;
  bool no_kd = false, no_schedule = false, clip_gates = false;
  double kd_temperature = 4.0, gate_weight_decay = 0.0;

  std::vector<std::string> budgets{"25%", "50%", "100%"};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> variants{"snl"};
  std::size_t workers = 1;
  double t_per_1k = 0.021, linear_time = 0.0;
};

void add_data_options(CLI::App* app, Options& o) {
  app->add_option("--arch", o.arch, "architecture descriptor")->capture_default_str();
  app->add_option("--dataset", o.dataset, "two-gaussians|concentric-rings|xor-grid|oriented-bars|file")
      ->capture_default_str();
  app->add_option("--n", o.n, "synthetic sample count")->capture_default_str();
  app->add_option("--noise", o.noise, "synthetic noise level")->capture_default_str();
  app->add_option("--data-seed", o.data_seed, "synthetic dataset seed")->capture_default_str();
  app->add_option("--test-fraction", o.test_fraction)->capture_default_str();
  app->add_option("--train-file", o.train_file, "SNLD container (dataset=file)");
  app->add_option("--test-file", o.test_file, "SNLD container (dataset=file)");
  app->add_option("--classes", o.classes, "expected class count for file datasets");
}

void add_train_options(CLI::App* app, Options& o) {
  app->add_option("--pretrain-epochs", o.pretrain_epochs)->capture_default_str();
  app->add_option("--pretrain-lr", o.pretrain_lr)->capture_default_str();
  app->add_option("--lambda0", o.lambda0)->capture_default_str();
  app->add_option("--kappa", o.kappa)->capture_default_str();
  app->add_option("--epsilon", o.epsilon)->capture_default_str();
  app->add_option("--adam-lr", o.adam_lr)->capture_default_str();
  app->add_option("--finetune-lr", o.finetune_lr)->capture_default_str();
  app->add_option("--finetune-epochs", o.finetune_epochs)->capture_default_str();
  app->add_option("--max-epochs", o.max_epochs)->capture_default_str();
  app->add_option("--batch-size", o.batch_size)->capture_default_str();
  app->add_option("--kd-temperature", o.kd_temperature)->capture_default_str();
  app->add_option("--gate-weight-decay", o.gate_weight_decay)->capture_default_str();
  app->add_flag("--no-kd", o.no_kd, "finetune with plain cross-entropy");
  app->add_flag("--no-schedule", o.no_schedule, "keep lambda fixed at lambda0");
  app->add_flag("--clip-gates", o.clip_gates, "clamp relaxed gates to [0,1]");
  app->add_option("--t-per-1k", o.t_per_1k, "seconds per 1000 ReLUs")->capture_default_str();
  app->add_option("--linear-time", o.linear_time, "seconds of linear compute")->capture_default_str();
}

ExperimentConfig make_config(const Options& o) {
  ExperimentConfig c;
  c.arch = ArchSpec::parse(o.arch);
  c.dataset.kind = parse_dataset_kind(o.dataset);
  c.dataset.n = o.n;
  c.dataset.noise = o.noise;
  c.dataset.seed = o.data_seed;
  c.dataset.test_fraction = o.test_fraction;
  c.dataset.train_path = o.train_file;
  c.dataset.test_path = o.test_file;
  c.dataset.classes = o.classes;
  c.pretrain.epochs = o.pretrain_epochs;
  c.pretrain.lr = o.pretrain_lr;
  c.snl.lambda0 = o.lambda0;
  c.snl.kappa = o.kappa;
  c.snl.epsilon = o.epsilon;
  c.snl.joint.lr = o.adam_lr;
  c.snl.finetune.lr = o.finetune_lr;
  c.snl.finetune_epochs = o.finetune_epochs;
  c.snl.max_epochs = o.max_epochs;
  c.snl.batch_size = o.batch_size;
  c.pretrain.batch_size = o.batch_size;
  c.snl.kd.enabled = !o.no_kd;
  c.snl.kd.temperature = o.kd_temperature;
  c.snl.schedule_enabled = !o.no_schedule;
  c.snl.clip_gates = o.clip_gates;
  c.snl.gate_weight_decay = o.gate_weight_decay;
  for (const std::string& b : o.budgets) c.budgets.push_back(Budget::parse(b));
  c.seeds = o.seeds;
  c.variants.clear();
  for (const std::string& v : o.variants) c.variants.push_back(parse_variant(v));
  c.workers = o.workers;
  c.latency = {o.t_per_1k, o.linear_time};
  c.snl.validate();
  return c;
}

void write_file(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

void check_snl_contract(const TrainResult& r, std::size_t budget, double eps) {
  if (r.report.status != TrainStatus::budget_reached) return;
  if (r.net.relu_count(eps) > budget) throw InvariantViolation("relu_count exceeds budget");
  if (!r.net.gates_binary() || !r.net.gates_frozen())
    throw InvariantViolation("gates are not binary and frozen");
}

void print_summary(const TrainResult& r, double eps) {
  std::cerr << "status=" << to_string(r.report.status) << " relu_count=" << r.net.relu_count(eps)
            << " test_acc=" << r.report.final_accuracy << " joint_epochs=" << r.report.joint_epochs
            << "\n";
}

// Expands `--config <file>` into flags appended to the command line. Keys name
// long options without the dashes; flags already given on the command line win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  const std::vector<CLI::ConfigItem> items = CLI::ConfigINI().from_config(in);
  auto given = [&](const std::string& flag) {
    for (const std::string& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--" || item.name.empty()) continue;
    const std::string flag = "--" + item.name;
    if (given(flag)) continue;
    if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
      if (item.inputs[0] == "true") extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    std::string joined;
    for (const std::string& v : item.inputs) joined += (joined.empty() ? "" : ",") + v;
    extra.push_back(joined);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

int run(int argc, char** argv) {
  CLI::App app{"Selective network linearization: training, sweeps and analysis"};
  app.require_subcommand(1);
  app.footer("Every training subcommand accepts --config <file> with key = value lines naming its long options.");
  Options o;

  // pretrain
  std::string ckpt_out, report_out;
  auto* pre = app.add_subcommand("pretrain", "train a dense teacher");
  add_data_options(pre, o);
  add_train_options(pre, o);
  pre->add_option("--seed", o.seeds.front(), "run seed")->capture_default_str();
  pre->add_option("--out", ckpt_out, "checkpoint path")->required();
  pre->add_option("--report", report_out, "per-epoch CSV");

  // snl
  std::string teacher_path, budget_text = "25%", variant_text = "snl";
  auto* snl = app.add_subcommand("snl", "linearize a pretrained network to a ReLU budget");
  add_data_options(snl, o);
  add_train_options(snl, o);
  snl->add_option("--teacher", teacher_path, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
  snl->add_option("--budget", budget_text, "ReLU budget, count or percent")->capture_default_str();
  snl->add_option("--variant", variant_text, "snl|snl-zero-out|snl-scratch")->capture_default_str();
  snl->add_option("--seed", o.seeds.front())->capture_default_str();
  snl->add_option("--out", ckpt_out, "checkpoint path");
  snl->add_option("--report", report_out, "per-epoch CSV");

  // prune
  double keep_fraction = 0.5;
  auto* prune = app.add_subcommand("prune", "structured l1 channel pruning baseline");
  add_data_options(prune, o);
  add_train_options(prune, o);
  prune->add_option("--teacher", teacher_path)->required()->check(CLI::ExistingFile);
  prune->add_option("--keep-fraction", keep_fraction)->capture_default_str();
  prune->add_option("--seed", o.seeds.front())->capture_default_str();
  prune->add_option("--out", ckpt_out, "checkpoint path");
  prune->add_option("--report", report_out, "per-epoch CSV");

  // sweep
  std::string out_dir = "sweep_out";
  auto* sweep = app.add_subcommand("sweep", "Pareto sweep over budgets, seeds and variants");
  add_data_options(sweep, o);
  add_train_options(sweep, o);
  sweep->add_option("--budgets", o.budgets, "ascending budgets, counts or percents")->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", o.seeds)->delimiter(',')->capture_default_str();
  sweep->add_option("--variants", o.variants, "snl|snl-zero-out|snl-scratch|prune-baseline")
      ->delimiter(',')->capture_default_str();
  sweep->add_option("--workers", o.workers)->capture_default_str();
  sweep->add_option("--out", out_dir, "output directory")->capture_default_str();

  // ablate
  std::string ablation = "lambda-grid";
  std::vector<double> grid;
  auto* ablate = app.add_subcommand("ablate", "lambda-grid, lr-grid or variant-compare traces");
  add_data_options(ablate, o);
  add_train_options(ablate, o);
  ablate->add_option("kind", ablation, "lambda-grid|lr-grid|variant-compare")->required();
  ablate->add_option("--grid", grid, "lambda or learning-rate values")->delimiter(',');
  ablate->add_option("--variants", o.variants)->delimiter(',')->capture_default_str();
  ablate->add_option("--budget", budget_text, "count threshold or budget")->capture_default_str();
  ablate->add_option("--seeds", o.seeds)->delimiter(',')->capture_default_str();
  ablate->add_option("--workers", o.workers)->capture_default_str();
  ablate->add_option("--out", report_out, "CSV path (default stdout)");

  // capacity
  auto* capacity = app.add_subcommand("capacity", "capacity bounds and allocation");
  capacity->require_subcommand(1);
  VerifyOptions vo;
  std::string verify_out;
  auto* verify = capacity->add_subcommand("verify", "fuzz the piece-count bound with the exact oracle");
  verify->add_option("--trials", vo.trials)->capture_default_str();
  verify->add_option("--d-min", vo.d_min)->capture_default_str();
  verify->add_option("--d-max", vo.d_max)->capture_default_str();
  verify->add_option("--alpha1", vo.alpha1, "fixed alpha1 (negative: random)")->capture_default_str();
  verify->add_option("--alpha2", vo.alpha2, "fixed alpha2 (negative: random)")->capture_default_str();
  verify->add_option("--seed", vo.seed)->capture_default_str();
  verify->add_option("--out", verify_out, "CSV path (default stdout)");
  double d1 = 0, d2 = 0, cap_budget = 0;
  auto* optimal = capacity->add_subcommand("optimal", "closed-form and grid-search budget allocation");
  optimal->add_option("--d1", d1)->required();
  optimal->add_option("--d2", d2)->required();
  optimal->add_option("--budget", cap_budget)->required();

  // latency
  auto* latency = app.add_subcommand("latency", "online latency model");
  latency->require_subcommand(1);
  std::vector<double> relus;
  std::string measure_ckpt, points_path;
  auto* estimate = latency->add_subcommand("estimate", "estimate latency from ReLU counts");
  estimate->add_option("--relus", relus, "ReLU counts")->delimiter(',')->required();
  estimate->add_option("--t-per-1k", o.t_per_1k)->capture_default_str();
  estimate->add_option("--linear-time", o.linear_time)->capture_default_str();
  estimate->add_option("--measure", measure_ckpt, "checkpoint whose linear layers are timed")
      ->check(CLI::ExistingFile);
  auto* fit = latency->add_subcommand("fit", "least-squares per-ReLU cost");
  fit->add_option("--points", points_path, "CSV relu_count,latency")->required()->check(CLI::ExistingFile);

  // report
  auto* report = app.add_subcommand("report", "reports on trained networks");
  report->require_subcommand(1);
  std::string retention_ckpt;
  auto* retention = report->add_subcommand("retention", "per-layer ReLU retention");
  retention->add_option("--checkpoint", retention_ckpt)->required()->check(CLI::ExistingFile);

  // dataset
  auto* dataset = app.add_subcommand("dataset", "write a synthetic dataset as SNLD containers");
  std::string train_out, test_out;
  add_data_options(dataset, o);
  dataset->add_option("--train-out", train_out)->required();
  dataset->add_option("--test-out", test_out)->required();

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  if (*pre || *snl || *prune || *sweep || *ablate || *dataset) {
    const ExperimentConfig cfg = make_config(o);
    if (*dataset) {
      const DatasetSplit d = load_dataset(cfg.dataset);
      save_dataset(d.train, train_out);
      save_dataset(d.test, test_out);
      return kOk;
    }
    if (*sweep) {
      ExperimentConfig c = cfg;
      c.output_dir = out_dir;
      const SweepResult r = run_pareto_sweep(c);
      r.write_pareto_csv(std::cout);
      for (const ParetoPoint& p : r.points) {
        if (p.status == "budget-reached" && p.relu_count > p.budget) return kInvariant;
      }
      for (const ParetoPoint& p : r.points)
        if (p.status == "failed") return kRunFailure;
      return kOk;
    }
    if (*ablate) {
      AblationSpec spec;
      spec.kind = parse_ablation_kind(ablation);
      spec.values = grid;
      for (const std::string& v : o.variants) spec.variants.push_back(parse_variant(v));
      spec.budget = Budget::parse(budget_text).resolve(GatedNetwork::build(cfg.arch, 0).total_relu_ops());
      const AblationResult r = run_ablation(spec, cfg);
      std::ostringstream s;
      r.write_csv(s);
      write_file(report_out, s.str());
      for (const AblationCell& c : r.cells)
        if (c.status == "failed") return kRunFailure;
      return kOk;
    }
    const DatasetSplit data = load_dataset(cfg.dataset);
    const std::uint64_t seed = cfg.seeds.front();
    if (*pre) {
      PretrainConfig pc = cfg.pretrain;
      pc.seed = seed;
      TrainResult r = pretrain(GatedNetwork::build(cfg.arch, seed), data, pc);
      print_summary(r, cfg.snl.epsilon);
      save_checkpoint(r.net, ckpt_out, {seed, pc.epochs, 0.0});
      if (!report_out.empty()) write_file(report_out, r.report.csv());
      return r.report.status == TrainStatus::diverged ? kRunFailure : kOk;
    }
    Checkpoint teacher = load_checkpoint(teacher_path);
    TrainResult r = [&] {
      if (*snl) {
        const std::size_t b = Budget::parse(budget_text).resolve(teacher.net.total_relu_ops());
        const Variant v = parse_variant(variant_text);
        if (v == Variant::prune_baseline) throw std::invalid_argument("use the prune subcommand");
        TrainResult res = run_variant(teacher.net, data, cfg, b, v, seed);
        check_snl_contract(res, b, cfg.snl.epsilon);
        return res;
      }
      SnlConfig sc = cfg.snl;
      sc.seed = seed;
      return prune_baseline(teacher.net, keep_fraction, data, sc, &teacher.net);
    }();
    print_summary(r, cfg.snl.epsilon);
    if (!ckpt_out.empty()) save_checkpoint(r.net, ckpt_out, {seed, r.report.joint_epochs, 0.0});
    if (!report_out.empty()) write_file(report_out, r.report.csv());
    return r.report.status == TrainStatus::diverged ? kRunFailure : kOk;
  }

  if (*verify) {
    const VerifyReport r = verify_capacity_bounds(vo);
    std::ostringstream s;
    r.write_csv(s);
    write_file(verify_out, s.str());
    std::cerr << "trials=" << r.rows.size() << " violations=" << r.violations
              << " inexact=" << r.secant_failures << " max_ratio=" << r.max_ratio << "\n";
    const SawtoothProbe probe = sawtooth_probe();
    std::cerr << "sawtooth pieces=" << probe.pieces << " bound=" << probe.bound << " ratio=" << probe.ratio << "\n";
    if (!r.ok()) {
      std::cerr << "first offending seed " << r.first_bad_seed << "\n";
      return kInvariant;
    }
    return kOk;
  }
  if (*optimal) {
    const auto d1i = static_cast<std::size_t>(d1), d2i = static_cast<std::size_t>(d2);
    const auto bi = static_cast<std::size_t>(cap_budget);
    if (d1 <= 0 || d2 <= 0 || cap_budget < 0 || d1 != static_cast<double>(d1i) ||
        d2 != static_cast<double>(d2i) || cap_budget != static_cast<double>(bi))
      throw std::invalid_argument("d1, d2 and budget must be non-negative integers");
    write_csv_row(std::cout, {"method", "alpha1", "alpha2", "k1", "k2", "objective"});
    try {
      const Alphas a = optimal_alphas(d1, d2, cap_budget);
      write_csv_row(std::cout, {"closed-form", csv_number(a.alpha1), csv_number(a.alpha2), "", "",
                                csv_number(bound_snl(d1, d2, 2, a.alpha1, a.alpha2))});
    } catch (const InteriorSolutionError& e) {
      std::cerr << "closed form: " << e.what() << "\n";
    }
    auto row = [&](const char* name, const Allocation& a) {
      write_csv_row(std::cout, {name, csv_number(a.k1 / d1),
                                csv_number(a.k2 / d2), csv_number(a.k1),
                                csv_number(a.k2), csv_number(a.objective)});
    };
    row("rounded", rounded_closed_form(d1i, d2i, bi));
    for (const Allocation& a : grid_search_allocation(d1i, d2i, bi)) row("grid", a);
    return kOk;
  }
  if (*estimate) {
    LatencyModel m{o.t_per_1k, o.linear_time};
    if (!measure_ckpt.empty()) m.linear_time = measure_linear_time(load_checkpoint(measure_ckpt).net);
    write_latency_estimates(std::cout, relus, m);
    return kOk;
  }
  if (*fit) {
    std::ifstream in(points_path);
    const auto pts = read_latency_points(in);
    const LinearFit f = fit_per_relu_cost(pts);
    std::cout << "slope_per_relu,intercept,slope_per_1k\n"
              << csv_number(f.slope) << ',' << csv_number(f.intercept) << ','
              << csv_number(f.slope * 1000) << '\n';
    return kOk;
  }
  if (*retention) {
    const Checkpoint ck = load_checkpoint(retention_ckpt);
    const auto rows = layer_retention_report(ck.net);
    write_csv_header(std::cout, "layer_retention", 1, {"gate_index", "layer", "relu_before", "relu_after", "fraction"});
    for (const RetentionRow& r : rows)
      write_csv_row(std::cout, {std::to_string(r.gate_index), std::to_string(r.layer),
                                std::to_string(r.relu_before), std::to_string(r.relu_after),
                                csv_number(r.fraction)});
    return kOk;
  }
  return kConfigError;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kInvariant;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::logic_error& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kInvariant;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kRunFailure;
  }
}
