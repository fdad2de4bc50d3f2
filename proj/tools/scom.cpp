// Command-line front end: training runs, stream-count scans, optimizer
// convergence traces, and mode comparisons, all emitting CSV.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scom/channel.hpp"
#include "scom/fl/config.hpp"
#include "scom/fl/training.hpp"
#include "scom/precoder_opt.hpp"
#include "scom/rng.hpp"
#include "scom/state_evolution.hpp"

namespace fs = std::filesystem;
using namespace scom;
using namespace scom::fl;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

SimConfig resolve_config(const CommonArgs& args) {
  SimConfig config =
      args.config_path.empty() ? SimConfig{} : load_config(args.config_path);
  if (args.seed) config.seed = *args.seed;
  config.validate();
  return config;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / name);
  if (!out) throw InvalidArgument("cannot write to " + (dir / name).string());
  return out;
}

void write_resolved(const SimConfig& config, const fs::path& dir) {
  auto out = open_output(dir, "config-resolved");
  out << serialize_config(config);
}

int cmd_train(const CommonArgs& args, bool with_bound) {
  const SimConfig config = resolve_config(args);
  const fs::path dir(args.out_dir);
  write_resolved(config, dir);

  const TrainingResult result = run_training(config);
  auto csv = open_output(dir, "metrics.csv");
  csv << metrics_csv_header() << '\n';
  for (const auto& row : result.metrics) csv << metrics_csv_row(row) << '\n';

  double wall = 0.0;
  for (const auto& row : result.metrics) wall += row.wall_clock_s;
  const auto& last = result.metrics.back();
  std::cout << "rounds=" << config.rounds << " final_loss=" << last.train_loss
            << " final_accuracy=" << last.test_accuracy << " wall_s=" << wall
            << '\n';

  if (with_bound) {
    SyntheticTask task(config.data_seed(), config.task);
    const BoundCheck check = check_convergence_bound(task, result, config);
    auto bound_csv = open_output(dir, "bound.csv");
    bound_csv << "round,measured_gap,bound\n";
    for (size_t t = 0; t < check.gap.size(); ++t)
      bound_csv << t << ',' << fmt17(check.gap[t]) << ',' << fmt17(check.bound[t])
                << '\n';
    std::cout << "psi=" << check.psi
              << " chi1=" << check.params.grad_bound_const
              << " chi2=" << check.params.grad_bound_slope << '\n';
  }
  return 0;
}

int cmd_scan_ns(const CommonArgs& args, int draws, int channel_uses) {
  const SimConfig config = resolve_config(args);
  const fs::path dir(args.out_dir);
  write_resolved(config, dir);

  const int model_dim = CodecConfig::padded_dim(config.task.model_dim());
  PriorParams prior{config.sparsity, 1.0 / config.sparsity};
  AnalysisParams params;
  params.smoothness = 1.0;
  params.strong_convexity = 0.5;
  params.grad_bound_const = 1.0;
  params.grad_bound_slope = 0.0;
  params.devices = config.task.devices;
  params.sparsity = config.sparsity;
  params.grad_scale = 1.0;

  const auto positions = sample_geometry(config.geometry_seed(),
                                         config.task.devices, config.geometry);
  auto sigma_w_of = [&](int ns) {
    double acc = 0.0;
    for (int d = 0; d < draws; ++d) {
      const auto channels =
          sample_channels(derive_seed(config.channel_seed(), d), positions,
                          config.n_rx, config.n_tx, config.geometry);
      const auto corr =
          CorrelationModel::uniform(config.task.devices, config.rho0);
      acc += ao_admm(channels.h, corr, config.geometry.noise_power_w,
                     config.geometry.power_budget_w, ns, config.optimizer)
                 .objective_value;
    }
    return acc / draws;
  };

  const StreamScan scan = scan_streams(channel_uses, config.n_tx, config.n_rx,
                                       model_dim, prior, params, sigma_w_of);
  auto csv = open_output(dir, "scan.csv");
  csv << "N_S,kappa,sigma_w,v_star,C\n";
  for (const auto& row : scan.rows)
    csv << row.streams << ',' << fmt17(row.kappa) << ',' << fmt17(row.sigma_w)
        << ',' << fmt17(row.v_star) << ',' << fmt17(row.c) << '\n';
  std::cout << "best_N_S=" << scan.best_streams << '\n';
  return 0;
}

int cmd_opt_bench(const CommonArgs& args, int instances) {
  const SimConfig config = resolve_config(args);
  const fs::path dir(args.out_dir);
  write_resolved(config, dir);

  const auto positions = sample_geometry(config.geometry_seed(),
                                         config.task.devices, config.geometry);
  auto csv = open_output(dir, "opt_trace.csv");
  csv << "instance,iteration,objective,primal_residual\n";
  for (int i = 0; i < instances; ++i) {
    const auto channels =
        sample_channels(derive_seed(config.channel_seed(), i), positions,
                        config.n_rx, config.n_tx, config.geometry);
    const auto corr = CorrelationModel::uniform(config.task.devices, config.rho0);
    const PrecoderSolution sol =
        ao_admm(channels.h, corr, config.geometry.noise_power_w,
                config.geometry.power_budget_w, config.streams, config.optimizer);
    for (size_t it = 0; it < sol.objective_trace.size(); ++it)
      csv << i << ',' << it << ',' << fmt17(sol.objective_trace[it]) << ','
          << fmt17(sol.max_primal_residual) << '\n';
    std::cout << "instance=" << i << " objective=" << sol.objective_value
              << " outer_iters=" << sol.outer_iterations << '\n';
  }
  return 0;
}

int cmd_compare(const CommonArgs& args, int seeds) {
  const SimConfig base = resolve_config(args);
  const fs::path dir(args.out_dir);
  write_resolved(base, dir);

  auto csv = open_output(dir, "compare.csv");
  csv << "mode,seed,round,cumulative_channel_uses,train_loss,test_accuracy\n";
  const Aggregation modes[] = {Aggregation::ideal, Aggregation::scom,
                               Aggregation::zero_forcing};
  CodecConfig codec;
  codec.model_dim = CodecConfig::padded_dim(base.task.model_dim());
  codec.sparsity = base.sparsity;
  codec.compression = base.compression;
  codec.streams = base.streams;
  const long k_uses = codec.channel_uses();

  for (Aggregation mode : modes) {
    for (int s = 0; s < seeds; ++s) {
      SimConfig config = base;
      config.aggregation = mode;
      config.seed = base.seed + s;
      const TrainingResult result = run_training(config);
      for (const auto& row : result.metrics)
        csv << to_string(mode) << ',' << config.seed << ',' << row.round << ','
            << row.round * k_uses << ',' << fmt17(row.train_loss) << ','
            << fmt17(row.test_accuracy) << '\n';
      std::cout << to_string(mode) << " seed=" << config.seed
                << " final_accuracy=" << result.metrics.back().test_accuracy
                << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-coded multiplexing simulator for over-the-air federated learning"};
  app.require_subcommand(1);

  CommonArgs common;
  bool with_bound = false;
  int draws = 20;
  int channel_uses = 256;
  int instances = 5;
  int seeds = 5;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "experiment config file");
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--seed", common.seed, "override run.seed");
  };

  CLI::App* train = app.add_subcommand("train", "run one training experiment");
  add_common(train);
  train->add_flag("--bound", with_bound, "also emit the convergence bound trajectory");

  CLI::App* scan = app.add_subcommand("scan-ns", "scan the multiplexed stream count");
  add_common(scan);
  scan->add_option("--draws", draws, "channel draws to average per stream count");
  scan->add_option("--channel-uses", channel_uses, "fixed channel uses per round");

  CLI::App* bench = app.add_subcommand("opt-bench", "precoder optimizer convergence traces");
  add_common(bench);
  bench->add_option("--instances", instances, "number of channel instances");

  CLI::App* compare = app.add_subcommand("compare", "accuracy curves across aggregation modes");
  add_common(compare);
  compare->add_option("--seeds", seeds, "number of seeds per mode");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(common, with_bound);
    if (scan->parsed()) return cmd_scan_ns(common, draws, channel_uses);
    if (bench->parsed()) return cmd_opt_bench(common, instances);
    if (compare->parsed()) return cmd_compare(common, seeds);
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
