#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqagt/analysis.h"
#include "dqagt/config.h"
#include "dqagt/engine.h"

namespace dqagt {

// Everything a command needs before running the engine.
struct Prepared {
  AggregativeProblem problem;
  MixingMatrix mixing;
  Eigen::VectorXd x0;
  ReferenceSolution reference;
  InitialBounds bounds;
  std::optional<TuningReport> report;
  std::string tuning_failure;  // why report is empty
  // Parameters the run will use.
  double alpha = 0.0;
  double gamma = 0.0;
  std::int64_t levels = 0;
};

// Builds the problem, graph and oracle, then tunes. When every run
// parameter is fixed a tuning failure is recorded instead of thrown.
Prepared prepare(const ExperimentConfig& cfg);

RunConfig make_run_config(const ExperimentConfig& cfg, const Prepared& prep,
                          CommMode mode);

// Exit codes: 0 success, 1 run or verification failure, 2 bad input.
int cmd_tune(const ExperimentConfig& cfg, std::ostream& log);
int cmd_run(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, const std::vector<std::int64_t>& levels,
              std::ostream& log);
int cmd_verify(const ExperimentConfig& cfg, bool sabotage, std::ostream& log);

}  // namespace dqagt
