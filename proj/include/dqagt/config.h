#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqagt/problems.h"
#include "dqagt/topology.h"

namespace dqagt {

// INI experiment description. Sections and keys:
//
//   [problem]   kind = placement | bandwidth | quadratic
//               placement: targets = "3,5; 6,9; ..."  gammas = "100,100,..."
//                          reference_x = "x1,y1, x2,y2, ..." (optional)
//               bandwidth: n_agents, reg
//               quadratic: n_agents, dim_x, dim_agg, seed, coupling
//   [constants] mu, l1, l2, l3 (each optional, overrides derived values)
//   [graph]     kind = complete | ring | file; self_weight (ring); path (file)
//   [run]       alpha, gamma, L (number or "auto"), alpha_fraction,
//               gamma_margin, l0, rounds, mode = quantized | exact | both,
//               x0 = "..." or x0_seed, x0_low, x0_high, strict_saturation,
//               stop_tol, gamma_J
//   [output]    directory, write_trajectory
struct ProblemSpec {
  std::string kind = "placement";
  std::vector<Eigen::Vector2d> targets;
  std::vector<double> gammas;
  std::optional<Eigen::VectorXd> reference_x;
  int n_agents = 3;
  double reg = 0.01;
  int dim_x = 2;
  int dim_agg = 2;
  std::uint64_t seed = 1;
  double coupling = 1.0;
};

struct ConstantsOverride {
  std::optional<double> mu, l1, l2, l3;
};

struct GraphSpec {
  std::string kind = "complete";
  double self_weight = 0.5;
  std::string path;
};

enum class ModeSelection { kQuantized, kExact, kBoth };

struct RunSpec {
  std::optional<double> alpha;  // nullopt means auto
  double alpha_fraction = 0.9;
  std::optional<double> gamma;
  double gamma_margin = 0.5;
  double l0 = 1.0;
  std::optional<std::int64_t> levels;
  std::int64_t rounds = 100;
  ModeSelection mode = ModeSelection::kQuantized;
  std::optional<Eigen::VectorXd> x0;
  std::uint64_t x0_seed = 1;
  double x0_low = 0.0;
  double x0_high = 10.0;
  bool strict_saturation = false;
  double stop_tol = 0.0;
  double gamma_J = 0.1;
};

struct OutputSpec {
  std::string directory = "out";
  bool write_trajectory = true;
};

struct ExperimentConfig {
  ProblemSpec problem;
  ConstantsOverride constants;
  GraphSpec graph;
  RunSpec run;
  OutputSpec output;
};

// Throws ConfigError on unknown sections or keys and on malformed values.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const ExperimentConfig& cfg);
bool same_settings(const ExperimentConfig& a, const ExperimentConfig& b);

std::string to_string(ModeSelection mode);

AggregativeProblem build_problem(const ExperimentConfig& cfg);
MixingMatrix build_graph(const ExperimentConfig& cfg, int n_agents);
// Explicit x0, or a uniform draw from [x0_low, x0_high] seeded by x0_seed.
Eigen::VectorXd initial_point(const ExperimentConfig& cfg,
                              const AggregativeProblem& p);

}  // namespace dqagt
