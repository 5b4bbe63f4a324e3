// Command-line front end: run, sweep and diagnose experiments from a JSON config.

#include "horus/config.hpp"
#include "horus/error.hpp"
#include "horus/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitInvalidConfig = 2;
constexpr int kExitInvariant = 3;

horus::RunConfig load(const std::string& path, const std::optional<std::uint64_t>& seed,
                      const std::optional<std::string>& output_dir) {
  horus::RunConfig cfg = horus::load_config(path);
  if (seed) cfg.sim.master_seed = *seed;
  if (output_dir) cfg.output_dir = *output_dir;
  return cfg;
}

void print_summary(const horus::RunSummary& s) {
  std::printf("%s\n%s\n", horus::summary_csv_header().c_str(), horus::summary_csv_row(s).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust LoRA federated learning simulator"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  app.add_option("--seed", seed, "Override master_seed");
  app.add_option("--output-dir", output_dir, "Override output_dir");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", config_path, "JSON run configuration")->required();
  run->add_option("--seed", seed, "Override master_seed");
  run->add_option("--output-dir", output_dir, "Override output_dir");

  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value along an axis");
  sweep->add_option("config", config_path, "JSON run configuration")->required();
  sweep->add_option("--axis", axis, "lambda | rank | aggregator")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  sweep->add_option("--seed", seed, "Override master_seed");
  sweep->add_option("--output-dir", output_dir, "Override output_dir");

  auto* diagnose = app.add_subcommand("diagnose", "Run and log per-client top-k energy ratios of A and B");
  diagnose->add_option("config", config_path, "JSON run configuration")->required();
  diagnose->add_option("--seed", seed, "Override master_seed");
  diagnose->add_option("--output-dir", output_dir, "Override output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalidConfig;
  }

  try {
    horus::RunConfig cfg = load(config_path, seed, output_dir);
    if (*run) {
      print_summary(horus::run_to_directory(cfg));
    } else if (*diagnose) {
      print_summary(horus::run_to_directory(cfg, true));
    } else if (*sweep) {
      const auto summaries = horus::run_sweep(cfg, horus::parse_sweep_axis(axis), values);
      std::printf("axis,value,%s\n", horus::summary_csv_header().c_str());
      for (std::size_t i = 0; i < summaries.size(); ++i)
        std::printf("%s,%s,%s\n", axis.c_str(), values[i].c_str(), horus::summary_csv_row(summaries[i]).c_str());
    }
  } catch (const horus::ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const horus::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
