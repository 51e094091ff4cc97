#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <omp.h>

#include "CLI11.hpp"
#include "cmldiff/cli.hpp"

namespace cli = cmldiff::cli;

int main(int argc, char** argv) {
  CLI::App app{"Coupled map lattice diffusion: simulation, RG flow and verification"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  double budget = 0.0;
  for (const auto& name : cli::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads (default: CMLDIFF_THREADS or all)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory (default: CMLDIFF_OUT or the config)");
    sub->add_option("--budget-seconds", budget, "wall-clock budget; 0 = unlimited")->check(CLI::NonNegativeNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommands().front();

  std::ifstream in(config_path, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();
  cli::ExperimentConfig config;
  try {
    config = cli::parse_config(text.str());
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error at " << (e.path().empty() ? "/" : e.path()) << ": " << e.what() << "\n";
    return cli::kExitConfig;
  }

  if (sub->count("--seed")) config.master_seed = seed;
  if (sub->count("--budget-seconds")) config.budget_seconds = budget;
  if (!sub->count("--threads"))
    if (const char* env = std::getenv("CMLDIFF_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        threads = 0;
      }
      if (threads < 1) {
        std::cerr << "config error: CMLDIFF_THREADS must be a positive integer\n";
        return cli::kExitConfig;
      }
    }
  if (threads > 0) omp_set_num_threads(threads);
  if (!sub->count("--out"))
    if (const char* env = std::getenv("CMLDIFF_OUT")) out = env;
  if (!out.empty()) config.out_dir = out;

  return cli::run_command(command, config, config.out_dir, std::cerr);
}
