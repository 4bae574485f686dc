#pragma once

#include <string>
#include <utility>
#include <vector>

namespace linesgd {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct TrainArgs {
  std::string config_path;  // optional key=value file
  Overrides overrides;      // flag values, applied after the file
  std::string out;
  bool dry_run{false};
  int threads{1};
};

struct ScanArgs {
  std::string traj;
  std::string out;
  Overrides overrides;
  int threads{1};
};

struct FanArgs {
  std::string traj;
  std::string out;
  Overrides overrides;
  int threads{1};
};

struct AnalyzeArgs {
  std::string scans;  // directory of step_* archives
  std::string config_path;
  std::string out;
  Overrides overrides;
  int threads{1};
};

struct StrategiesArgs {
  std::string traj;
  std::string scans;
  std::string out;
  Overrides overrides;
  int threads{1};
};

struct BatchsizeArgs {
  std::string traj;
  std::string scans;
  std::string out;
  Overrides overrides;
  int threads{1};
};

struct ReportArgs {
  std::vector<std::string> inputs;  // trajectory and/or result directories
  std::string out;
};

int cmd_train(const TrainArgs& args);
int cmd_scan(const ScanArgs& args);
int cmd_fan(const FanArgs& args);
int cmd_analyze(const AnalyzeArgs& args);
int cmd_strategies(const StrategiesArgs& args);
int cmd_batchsize(const BatchsizeArgs& args);
int cmd_report(const ReportArgs& args);

}  // namespace linesgd
