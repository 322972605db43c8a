// Command-line front end: tune, run, sweep, verify.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dqagt/commands.h"
#include "dqagt/config.h"
#include "dqagt/errors.h"

int main(int argc, char** argv) {
  CLI::App app{
      "Quantized distributed aggregative optimization simulator.\n"
      "Outputs (in --out): trajectory.csv, diagnostics.csv, tuning_report.txt,\n"
      "summary.txt, codes.csv (run); sweep.csv (sweep).\n"
      "Exit codes: 0 success, 1 run or verification failure, 2 bad input."};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> mode;
  bool strict = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::int64_t> levels;
  bool sabotage = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI experiment config")->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] directory)");
    sub->add_option("--mode", mode, "quantized, exact or both")
        ->check(CLI::IsMember({"quantized", "exact", "both"}));
    sub->add_flag("--strict-saturation", strict, "abort on the first saturated code");
    sub->add_option("--seed", seed, "seed for the random initial point");
  };
  CLI::App* tune = app.add_subcommand("tune", "compute step size, scaling rate and level bound");
  CLI::App* run = app.add_subcommand("run", "run the algorithm and write CSV and summary files");
  CLI::App* sweep = app.add_subcommand("sweep", "run once per quantization level count");
  CLI::App* verify = app.add_subcommand("verify", "check the convergence invariants on a run");
  for (auto* sub : {tune, run, sweep, verify}) common(sub);
  sweep->add_option("--levels", levels, "comma-separated list of L values")
      ->delimiter(',')
      ->required();
  verify->add_flag("--sabotage", sabotage, "corrupt one code to exercise the checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  dqagt::ExperimentConfig cfg;
  try {
    cfg = dqagt::load_config(config_path);
  } catch (const dqagt::ConfigurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (out_dir) cfg.output.directory = *out_dir;
  if (mode) {
    cfg.run.mode = *mode == "exact"  ? dqagt::ModeSelection::kExact
                   : *mode == "both" ? dqagt::ModeSelection::kBoth
                                     : dqagt::ModeSelection::kQuantized;
  }
  if (strict) cfg.run.strict_saturation = true;
  if (seed) {
    cfg.run.x0_seed = *seed;
    cfg.run.x0.reset();
  }

  if (*tune) return dqagt::cmd_tune(cfg, std::cout);
  if (*run) return dqagt::cmd_run(cfg, std::cout);
  if (*sweep) return dqagt::cmd_sweep(cfg, levels, std::cout);
  return dqagt::cmd_verify(cfg, sabotage, std::cout);
}
