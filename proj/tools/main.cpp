// linesgd: train small networks with SGD, measure losses along every
// update-step line, and reproduce the line-search analyses on the result.
#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "linesgd/commands.hpp"
#include "linesgd/errors.hpp"
#include "linesgd/io_util.hpp"

namespace {

using linesgd::Overrides;

// Thread-count resolution: flag > LINESGD_THREADS > 1.
int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("LINESGD_THREADS")) {
    try {
      long long v = linesgd::parse_int(env);
      if (v > 0) return static_cast<int>(v);
    } catch (const linesgd::FormatError&) {
      throw linesgd::SpecError(std::string("LINESGD_THREADS is not a number: '") + env + "'");
    }
  }
  return 1;
}

void add_key_option(CLI::App* cmd, Overrides* ov, const std::string& flag, const std::string& key,
                    const std::string& desc) {
  cmd->add_option_function<std::string>(
      flag, [ov, key](const std::string& v) { ov->emplace_back(key, v); }, desc);
}

// --window accepts "lo,hi" or a symmetric half-width.
void add_window_option(CLI::App* cmd, Overrides* ov) {
  cmd->add_option_function<std::string>(
      "--window",
      [ov](const std::string& v) {
        auto parts = linesgd::split(v, ',');
        if (parts.size() == 2) {
          ov->emplace_back("analysis.window.lo", parts[0]);
          ov->emplace_back("analysis.window.hi", parts[1]);
        } else if (parts.size() == 1) {
          ov->emplace_back("analysis.window.lo", "-" + parts[0]);
          ov->emplace_back("analysis.window.hi", parts[0]);
        } else {
          throw CLI::ValidationError("--window", "expected 'lo,hi' or a half-width");
        }
      },
      "shape window, 'lo,hi' or a symmetric half-width (default from momentum)");
}

void add_grid_options(CLI::App* cmd, Overrides* ov) {
  add_key_option(cmd, ov, "--grid-lo", "scan.grid.lo", "scan grid lower bound");
  add_key_option(cmd, ov, "--grid-hi", "scan.grid.hi", "scan grid upper bound");
  add_key_option(cmd, ov, "--grid-res", "scan.grid.res", "scan grid spacing");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loss measurement and line-search analysis along SGD update-step lines"};
  app.require_subcommand(1);

  linesgd::TrainArgs train_args;
  linesgd::ScanArgs scan_args;
  linesgd::FanArgs fan_args;
  linesgd::AnalyzeArgs analyze_args;
  linesgd::StrategiesArgs strategies_args;
  linesgd::BatchsizeArgs batchsize_args;
  linesgd::ReportArgs report_args;
  int train_threads = 0, scan_threads = 0, fan_threads = 0, analyze_threads = 0, strategies_threads = 0,
      batchsize_threads = 0;

  auto* train = app.add_subcommand("train", "train a model with SGD and record the trajectory");
  train->add_option("--config", train_args.config_path, "key=value config file");
  train->add_option("--out", train_args.out, "trajectory output directory");
  train->add_flag("--dry-run", train_args.dry_run, "print the resolved config and write nothing");
  train->add_option("--threads", train_threads, "worker threads");
  add_key_option(train, &train_args.overrides, "--seed", "seed", "master seed");
  train->callback([&] {
    train_args.threads = resolve_threads(train_threads);
    cmd_train(train_args);
  });

  auto* scan = app.add_subcommand("scan", "measure loss curves along the trajectory's update-step lines");
  scan->add_option("trajectory", scan_args.traj, "trajectory directory")->required();
  scan->add_option("--out", scan_args.out, "scan archive output directory");
  scan->add_option("--threads", scan_threads, "worker threads");
  add_key_option(scan, &scan_args.overrides, "--stride", "scan.stride", "scan every this many steps");
  add_grid_options(scan, &scan_args.overrides);
  scan->add_flag_callback(
      "--per-sample", [&] { scan_args.overrides.emplace_back("scan.granularity", "per_sample"); },
      "store the per-sample loss matrix for every scanned line");
  scan->callback([&] {
    scan_args.threads = resolve_threads(scan_threads);
    cmd_scan(scan_args);
  });

  auto* fan = app.add_subcommand("fan", "scan several mini-batch lines from a single origin");
  fan->add_option("trajectory", fan_args.traj, "trajectory directory")->required();
  fan->add_option("--out", fan_args.out, "fan output directory");
  fan->add_option("--threads", fan_threads, "worker threads");
  add_grid_options(fan, &fan_args.overrides);
  add_key_option(fan, &fan_args.overrides, "--count", "fan.count", "number of lines");
  add_key_option(fan, &fan_args.overrides, "--step", "fan.step", "origin training step");
  fan->callback([&] {
    fan_args.threads = resolve_threads(fan_threads);
    cmd_fan(fan_args);
  });

  auto* analyze = app.add_subcommand("analyze", "shape-compare, fit and summarize scan archives");
  analyze->add_option("scans", analyze_args.scans, "directory of step_* scan archives")->required();
  analyze->add_option("--config", analyze_args.config_path, "key=value config file");
  analyze->add_option("--out", analyze_args.out, "analysis output directory");
  analyze->add_option("--threads", analyze_threads, "worker threads");
  add_window_option(analyze, &analyze_args.overrides);
  add_key_option(analyze, &analyze_args.overrides, "--kernel", "analysis.kernel", "smoothing kernel width");
  analyze->callback([&] {
    analyze_args.threads = resolve_threads(analyze_threads);
    cmd_analyze(analyze_args);
  });

  auto* strategies = app.add_subcommand("strategies", "compare update-step strategies on the scanned lines");
  strategies->add_option("trajectory", strategies_args.traj, "trajectory directory")->required();
  strategies->add_option("scans", strategies_args.scans, "directory of step_* scan archives")->required();
  strategies->add_option("--out", strategies_args.out, "strategy comparison output directory");
  strategies->add_option("--threads", strategies_threads, "worker threads");
  add_window_option(strategies, &strategies_args.overrides);
  add_key_option(strategies, &strategies_args.overrides, "--kernel", "analysis.kernel", "smoothing kernel width");
  add_key_option(strategies, &strategies_args.overrides, "--lrs", "strategies.lrs",
                 "comma-separated learning rates for the fixed-rate strategy");
  add_key_option(strategies, &strategies_args.overrides, "--mu", "strategies.mu",
                 "probe distance for the parabolic strategies");
  strategies->callback([&] {
    strategies_args.threads = resolve_threads(strategies_threads);
    cmd_strategies(strategies_args);
  });

  auto* batchsize = app.add_subcommand("batchsize", "virtual batch-size study on per-sample scans");
  batchsize->add_option("trajectory", batchsize_args.traj, "trajectory directory")->required();
  batchsize->add_option("scans", batchsize_args.scans, "directory of step_* scan archives")->required();
  batchsize->add_option("--out", batchsize_args.out, "batch-size study output directory");
  batchsize->add_option("--threads", batchsize_threads, "worker threads");
  add_key_option(batchsize, &batchsize_args.overrides, "--mu", "strategies.mu",
                 "probe distance for the parabolic strategy");
  add_key_option(batchsize, &batchsize_args.overrides, "--factors", "batch.factors",
                 "comma-separated resize factors for the slope-ratio study");
  add_key_option(batchsize, &batchsize_args.overrides, "--sizes", "batch.sizes",
                 "comma-separated virtual batch sizes");
  batchsize->callback([&] {
    batchsize_args.threads = resolve_threads(batchsize_threads);
    cmd_batchsize(batchsize_args);
  });

  auto* report = app.add_subcommand("report", "inventory result directories and plot training curves");
  report->add_option("inputs", report_args.inputs, "trajectory and/or result directories")->required();
  report->add_option("--out", report_args.out, "report output directory");
  report->callback([&] { cmd_report(report_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const linesgd::SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const linesgd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const linesgd::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const linesgd::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
