#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tierlab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"tierlab: deterministic tiered-memory simulator"};
  app.require_subcommand(1);

  std::string run_cfg;
  auto* run = app.add_subcommand("run", "run one simulation");
  run->add_option("config", run_cfg, "JSON run configuration")->required();

  std::string sweep_cfg;
  std::string axis;
  std::vector<std::string> values;
  unsigned jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "run one simulation per axis value");
  sweep->add_option("config", sweep_cfg, "JSON run configuration")->required();
  sweep->add_option("--axis", axis, "config key, dotted path or alias")->required();
  sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  sweep->add_option("--jobs", jobs, "parallel worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> inputs;
  std::string csv_path = "report.csv";
  auto* report = app.add_subcommand("report", "compare report.json files");
  report->add_option("inputs", inputs, "report.json files");
  report->add_option("--csv", csv_path, "CSV output path (empty to skip)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : tierlab::kExitConfig;
  }

  if (*run) return tierlab::cmd_run(run_cfg, std::cout, std::cerr);
  if (*sweep) return tierlab::cmd_sweep(sweep_cfg, axis, values, jobs, std::cout, std::cerr);
  return tierlab::cmd_report(inputs, csv_path, std::cout, std::cerr);
}
