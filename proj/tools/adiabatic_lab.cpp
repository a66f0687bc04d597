#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "adiabatic/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"adiabatic traversal laboratory"};
  app.require_subcommand(1);

  std::string run_config;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  CLI::App* run = app.add_subcommand("run", "run an experiment and write its artifacts");
  run->add_option("config", run_config, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");
  run->add_option("--jobs", jobs, "worker threads (overrides jobs)");

  std::string validate_config;
  CLI::App* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", validate_config, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : adiabatic::exit_code::config_error;
  }
  if (*run) return adiabatic::run_command(run_config, out_dir, jobs, std::cout, std::cerr);
  return adiabatic::validate_command(validate_config, std::cout);
}
