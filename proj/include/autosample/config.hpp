#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autosample/samplers.hpp"
#include "autosample/search.hpp"
#include "autosample/trainer.hpp"

namespace autosample {

/// Every setting a command can consume. Flat: each field is one config key
/// and one command-line flag of the same name.
struct RunConfig {
  std::string data;  // interactions TSV or a split directory; required
  int min_count = 1;
  std::array<int, 3> ratios{3, 1, 1};
  std::filesystem::path out = "out";
  std::string sampler = "rns";
  std::vector<SamplerSpec> samplers;
  TrainingConfig train;
  SearchConfig search;
  int jobs = 1;
  std::filesystem::path from;        // retrain: search output dir (default: out)
  std::filesystem::path checkpoint;  // eval: checkpoint file (default: out/checkpoint.bin)
  bool warm_start = true;
  // gen
  int users = 60;
  int items = 120;
  int blocks = 3;
  double density = 0.3;
  double noise = 0.05;

  RunConfig();
};

using Overrides = std::map<std::string, std::string>;

// All recognised keys, in canonical order.
const std::vector<std::string>& config_keys();

// Sets one key from its text form. Throws ConfigError on unknown keys (with
// a suggestion when one is close) or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Parses flat `key=value` text ('#' comments, blank lines ignored).
Overrides parse_config_text(const std::string& text);

// File values first, then `overrides`. An empty path means defaults only.
RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides);

// Resolved key/value view for provenance records.
nlohmann::json to_json(const RunConfig& cfg);

// Closest known key, if any is plausibly intended.
std::optional<std::string> suggest_key(const std::string& unknown);

}  // namespace autosample
