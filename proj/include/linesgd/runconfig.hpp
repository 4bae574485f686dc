#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "linesgd/analysis.hpp"
#include "linesgd/dataset.hpp"
#include "linesgd/grid.hpp"
#include "linesgd/model.hpp"
#include "linesgd/trainer.hpp"

namespace linesgd {

// One configurable key: name, default value, one-line help text.
// An empty default means "unset"; keys whose default is "auto" are derived
// from the master seed (or from other keys) when not set explicitly.
struct KeySpec {
  std::string name;
  std::string def;
  std::string help;
};

// Flat key=value configuration with a fixed registry of known keys.
// Values are stored as strings and parsed on access so that the exact
// text round-trips through config files and embedded JSON documents.
class RunConfig {
 public:
  RunConfig();  // all registry defaults

  static const std::vector<KeySpec>& registry();

  // Parses a flat key=value file ('#' comments, blank lines allowed).
  void apply_file(const std::string& path);
  // Applies values from a JSON object of string->string.
  void apply_json(const nlohmann::json& obj);
  // Sets a single key (e.g. a command-line override). Throws on unknown keys.
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  bool is_set(const std::string& key) const;  // non-empty and not "auto"

  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<long long> get_ints(const std::string& key) const;

  // Derived seed for an "auto" seed key; explicit values win.
  std::uint64_t seed_for(const std::string& key) const;

  ModelSpec model_spec() const;
  Dataset build_dataset() const;
  TrainConfig train_config() const;
  Grid scan_grid() const;
  Window analysis_window() const;

  nlohmann::ordered_json to_json() const;       // registry order
  std::string canonical_text() const;           // "key=value\n" in registry order
  std::string hash() const;                     // hex FNV-1a of canonical_text()

 private:
  std::map<std::string, std::string> values_;
};

// Hash of the config map as stored in a trajectory's config.json, used to
// tie scan archives back to the run that produced them.
std::string config_hash_of(const nlohmann::ordered_json& config_map);

}  // namespace linesgd
