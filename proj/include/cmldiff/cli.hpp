#pragma once

// Configuration ingestion and the five pipeline commands. The executable in
// tools/ only parses flags and calls run_command.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmldiff/lattice.hpp"

namespace cmldiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitValidator = 3;
inline constexpr int kExitBudget = 4;

/// Parse or validation failure; `path` is a JSON pointer to the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Raised before any work when a run would exceed its resource budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // geometry
  int d = 1;
  int M = 256;
  // model
  double a = 0.25;
  double eps_prime = 1.0 / 16;
  std::string noise = "cos";
  std::string map = "doubling";
  double kappa = 0.05;
  bool refresh_lost_bits = true;
  // rg
  int L = 4;
  int n_max = 3;
  std::size_t sources = 8;
  int window_cells = 2;
  std::size_t annealed_samples = 2000;
  // sampling
  std::size_t seeds = 32;
  std::size_t n_samples = 200;
  std::uint64_t burn_in = 64;
  std::uint64_t master_seed = 0;
  // simulate
  std::uint64_t steps = 1000;
  std::vector<std::uint64_t> snapshots;
  std::string initial = "spike";
  double initial_mass = 1.0;
  // rwre
  std::uint64_t t_max = 64;
  std::size_t max_memory_mb = 2048;
  // correlations
  std::string observable = "cos";
  int max_lag = 8;
  std::uint64_t length = 4096;
  int max_separation = 4;
  // verify
  std::vector<std::string> test_functions{"one", "gauss", "cos1", "cos2", "bump"};
  double trend_floor = 1e-8;
  double mass_limit = 1.0;
  // output
  std::string out_dir = "out";
  double budget_seconds = 0.0;

  CurrentModel model() const;
  LocalChaoticMap local_map() const;
  Geometry geometry() const { return Geometry(d, M); }
};

/// Parses a JSON document with "schema_version": 1. Unknown keys, wrong types
/// and out-of-range values raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);
/// Canonical JSON of the fully resolved configuration, output directory excluded.
std::string config_json(const ExperimentConfig& c);
/// fnv1a64 of config_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

const std::vector<std::string>& command_names();

/// Runs one command, writing its tables and manifest.json into out_dir.
/// Returns an exit code; config and budget errors are mapped to 2 and 4, any
/// other failure to 1.
int run_command(const std::string& command, const ExperimentConfig& config, const std::filesystem::path& out_dir,
                std::ostream& log);

}  // namespace cmldiff::cli
