#include "linesgd/runconfig.hpp"

#include <algorithm>

#include "linesgd/errors.hpp"
#include "linesgd/io_util.hpp"
#include "linesgd/rng.hpp"

namespace linesgd {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<KeySpec>& RunConfig::registry() {
  static const std::vector<KeySpec> kRegistry = {
      {"seed", "0", "master seed; derives every 'auto' seed below"},
      {"model.kind", "mlp", "mlp | quadratic"},
      {"model.layers", "16,32,32,4", "layer widths, input first, classes last"},
      {"model.activation", "relu", "relu | tanh"},
      {"model.init_seed", "auto", "weight init seed"},
      {"data.source", "synth", "synth | file"},
      {"data.synth.n", "2000", "synthetic sample count"},
      {"data.synth.classes", "4", "synthetic class count"},
      {"data.synth.dim", "16", "synthetic feature dimension"},
      {"data.synth.spread", "1.0", "synthetic within-class spread"},
      {"data.synth.seed", "auto", "synthetic data seed"},
      {"data.file.format", "", "idx | cifar10bin | csv (required for data.source=file)"},
      {"data.file.path", "", "dataset path (required for data.source=file)"},
      {"data.standardize", "0", "1 standardizes features to zero mean, unit sd"},
      {"data.subset.fraction", "1", "class-balanced fraction of the data to keep"},
      {"data.subset.seed", "auto", "subset sampling seed"},
      {"train.steps", "2000", "number of update steps"},
      {"train.lr", "0.1", "learning rate"},
      {"train.momentum", "0", "momentum coefficient in [0,1)"},
      {"train.batch_size", "128", "mini-batch size"},
      {"train.shuffle_seed", "auto", "epoch shuffle seed"},
      {"train.eval_stride", "10", "full-data loss/accuracy every this many steps"},
      {"train.snapshot_stride", "100", "parameter snapshot every this many steps"},
      {"scan.stride", "1", "scan every this many steps (stride > steps scans only step 0)"},
      {"scan.grid.lo", "-0.5", "scan grid lower bound"},
      {"scan.grid.hi", "0.5", "scan grid upper bound"},
      {"scan.grid.res", "0.006", "scan grid spacing"},
      {"scan.granularity", "full", "full | per_batch | per_sample"},
      {"scan.per_sample_steps", "", "extra steps that also store per-sample losses"},
      {"analysis.window.lo", "auto", "shape window lower bound (auto: -0.2, or -0.5 with momentum)"},
      {"analysis.window.hi", "auto", "shape window upper bound (auto: 0.2, or 0.5 with momentum)"},
      {"analysis.kernel", "25", "moving-average kernel width (odd)"},
      {"strategies.lrs", "1,0.1,0.05,0.01", "learning rates for the fixed-rate strategy"},
      {"strategies.mu", "0.1", "probe distance for parabolic strategies"},
      {"fan.count", "10", "number of mini-batch lines in a fan"},
      {"fan.step", "0", "training step the fan starts from"},
      {"batch.factors", "2,4,8", "batch-size factors for the slope-ratio study"},
      {"batch.sizes", "32,64,128,256,512", "virtual batch sizes for the improvement study"},
      {"batch.steps", "", "steps for the batch-size study (default: all per-sample scans)"},
      {"batch.seed", "auto", "virtual batch growth seed"},
  };
  return kRegistry;
}

RunConfig::RunConfig() {
  for (const auto& k : registry()) values_[k.name] = k.def;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw SpecError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_file(const std::string& path) {
  std::string text = read_text_file(path);
  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw SpecError(path + ":" + std::to_string(line_no) +
                      ": expected key=value, got '" + line + "'");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::apply_json(const nlohmann::json& obj) {
  if (!obj.is_object()) throw FormatError("config document is not an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!it.value().is_string()) {
      throw FormatError("config key '" + it.key() + "' is not a string value");
    }
    set(it.key(), it.value().get<std::string>());
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw SpecError("unknown config key '" + key + "'");
  return it->second;
}

bool RunConfig::is_set(const std::string& key) const {
  const std::string& v = get(key);
  return !v.empty() && v != "auto";
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return parse_double(get(key));
  } catch (const FormatError& e) {
    throw SpecError("config key " + key + ": " + e.what());
  }
}

long long RunConfig::get_int(const std::string& key) const {
  try {
    return parse_int(get(key));
  } catch (const FormatError& e) {
    throw SpecError("config key " + key + ": " + e.what());
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return parse_u64(get(key));
  } catch (const FormatError& e) {
    throw SpecError("config key " + key + ": " + e.what());
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw SpecError("config key " + key + ": expected 0/1/true/false, got '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& part : split(get(key), ',')) {
    std::string p = trim(part);
    if (p.empty()) continue;
    try {
      out.push_back(parse_double(p));
    } catch (const FormatError& e) {
      throw SpecError("config key " + key + ": " + e.what());
    }
  }
  return out;
}

std::vector<long long> RunConfig::get_ints(const std::string& key) const {
  std::vector<long long> out;
  for (const std::string& part : split(get(key), ',')) {
    std::string p = trim(part);
    if (p.empty()) continue;
    try {
      out.push_back(parse_int(p));
    } catch (const FormatError& e) {
      throw SpecError("config key " + key + ": " + e.what());
    }
  }
  return out;
}

std::uint64_t RunConfig::seed_for(const std::string& key) const {
  if (is_set(key)) return get_u64(key);
  std::uint64_t master = get_u64("seed");
  // Fixed per-key offsets keep derived streams independent of one another.
  std::uint64_t offset = 0;
  if (key == "model.init_seed") offset = 1;
  else if (key == "train.shuffle_seed") offset = 2;
  else if (key == "data.synth.seed") offset = 3;
  else if (key == "data.subset.seed") offset = 4;
  else if (key == "batch.seed") offset = 5;
  else throw SpecError("config key " + key + " has no derived seed");
  return splitmix64(master + offset);
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec;
  spec.kind = model_kind_from_string(get("model.kind"));
  spec.activation = activation_from_string(get("model.activation"));
  for (long long w : get_ints("model.layers")) {
    if (w <= 0) throw SpecError("config key model.layers: widths must be positive");
    spec.layers.push_back(static_cast<int>(w));
  }
  spec.init_seed = seed_for("model.init_seed");
  spec.validate();
  return spec;
}

Dataset RunConfig::build_dataset() const {
  const std::string& source = get("data.source");
  Dataset ds;
  if (source == "synth") {
    ds = synth_blobs(get_int("data.synth.n"), static_cast<int>(get_int("data.synth.classes")),
                     static_cast<int>(get_int("data.synth.dim")),
                     get_double("data.synth.spread"), seed_for("data.synth.seed"));
  } else if (source == "file") {
    if (!is_set("data.file.format")) {
      throw SpecError("config key data.file.format is required when data.source=file");
    }
    if (!is_set("data.file.path")) {
      throw SpecError("config key data.file.path is required when data.source=file");
    }
    ds = load_dataset(data_format_from_string(get("data.file.format")), get("data.file.path"));
  } else {
    throw SpecError("config key data.source: expected synth or file, got '" + source + "'");
  }
  if (get_bool("data.standardize")) standardize(ds);
  double fraction = get_double("data.subset.fraction");
  if (fraction < 1.0) ds = subset(ds, fraction, seed_for("data.subset.seed"));
  return ds;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.lr = get_double("train.lr");
  cfg.momentum = get_double("train.momentum");
  cfg.steps = get_int("train.steps");
  cfg.plan.batch_size = get_int("train.batch_size");
  cfg.plan.shuffle_seed = seed_for("train.shuffle_seed");
  cfg.plan.epoch = 0;
  cfg.model = model_spec();
  cfg.master_seed = get_u64("seed");
  cfg.eval_stride = get_int("train.eval_stride");
  cfg.snapshot_stride = get_int("train.snapshot_stride");
  cfg.validate();
  return cfg;
}

Grid RunConfig::scan_grid() const {
  return make_grid(get_double("scan.grid.lo"), get_double("scan.grid.hi"),
                   get_double("scan.grid.res"));
}

Window RunConfig::analysis_window() const {
  Window w;
  bool wide = get_double("train.momentum") > 0.0;
  w.lo = is_set("analysis.window.lo") ? get_double("analysis.window.lo") : (wide ? -0.5 : -0.2);
  w.hi = is_set("analysis.window.hi") ? get_double("analysis.window.hi") : (wide ? 0.5 : 0.2);
  if (!(w.lo < w.hi)) throw SpecError("analysis window is empty");
  return w;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& k : registry()) out[k.name] = values_.at(k.name);
  return out;
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& k : registry()) {
    out += k.name;
    out += '=';
    out += values_.at(k.name);
    out += '\n';
  }
  return out;
}

std::string RunConfig::hash() const {
  std::string text = canonical_text();
  return hex_u64(fnv1a64(text.data(), text.size()));
}

std::string config_hash_of(const nlohmann::ordered_json& config_map) {
  RunConfig cfg;
  cfg.apply_json(config_map);
  return cfg.hash();
}

}  // namespace linesgd
