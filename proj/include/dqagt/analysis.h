#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dqagt/engine.h"
#include "dqagt/problems.h"

namespace dqagt {

// ---- Tuning ----------------------------------------------------------------

// Largest step size for which rho(H(alpha)) < 1; the positive root of
// det(I - H(alpha)) = 0:
//   mu (1-k)^2 / (l3 (mu + l1 + l1 l3) ((1-k)(l1 + l2 + l2 l3) + 2 l2 l3)).
double alpha_upper_bound(const RegularityConstants& c, double kappa);

Eigen::Matrix3d build_H(double alpha, const RegularityConstants& c, double kappa);

// Roots of the characteristic cubic, by Cardano's formula in complex
// arithmetic followed by Newton polishing.
std::array<std::complex<double>, 3> eigenvalues_3x3(const Eigen::Matrix3d& h);
double spectral_radius(const Eigen::Matrix3d& h);
// Power iteration; an independent check of spectral_radius for nonnegative H.
double spectral_radius_power(const Eigen::Matrix3d& h, int max_iter = 2000000,
                             double tol = 1e-15);

// gamma = rho + margin (1 - rho). Throws UntunableError when rho >= 1.
double choose_gamma(double rho, double margin);

double spectral_norm3(const Eigen::Matrix3d& h);

// 3 sqrt(3) max(4 ||H||^2 / eps^2, eps^2 / (4 ||H||^2)).
double power_bound_constant(const Eigen::Matrix3d& h, double epsilon);

double compute_zeta(double alpha, const RegularityConstants& c);
double compute_C1(double l2, int n_agents, int dim_agg, double l0);

// The two terms whose maximum sets the level bound.
struct LevelTerms {
  double tracking = 0.0;  // (zeta C0 + 3 C1) / (l0 gamma)
  double initial = 0.0;   // sqrt(4 c1^2 + 4 c2^2) / l0
};
LevelTerms level_terms(double l0, double gamma, double zeta, double C0,
                       double C1, double c1, double c2);
// Smallest L >= 1 with 2L + 1 >= 2 max(terms) + 1.
std::int64_t level_bound(double l0, double gamma, double zeta, double C0,
                         double C1, double c1, double c2);

// ceil(log2(2L)) bits per scalar per round.
int bandwidth_bits(std::int64_t levels);

// c0 = ||x0 - x*||_inf, c1 = ||chi(0)||_inf, c2 = ||y(0)||_inf with the
// trackers initialised as the engine does.
struct InitialBounds {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};
InitialBounds measure_initial_bounds(const AggregativeProblem& p,
                                     const Eigen::VectorXd& x0,
                                     const Eigen::VectorXd& x_star);

// Unset optionals are resolved automatically.
struct TuneRequest {
  std::optional<double> alpha;
  double alpha_fraction = 0.9;
  std::optional<double> gamma;
  double gamma_margin = 0.5;
  double l0 = 1.0;
  std::optional<std::int64_t> levels;
};

struct TuningReport {
  RegularityConstants constants;
  double kappa = 0.0;
  int n_agents = 0;
  int dim_x = 0;
  int dim_agg = 0;
  double alpha_max = 0.0;
  double alpha = 0.0;
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  double H_norm = 0.0;
  double rho_H = 0.0;
  double gamma = 0.0;
  double epsilon = 0.0;
  double c3 = 0.0;
  double zeta = 0.0;
  double C0 = 0.0;
  double C1 = 0.0;
  double l0 = 0.0;
  InitialBounds initial;
  LevelTerms terms;
  std::int64_t L_min = 0;  // 0 when a fixed L was given and the bound exceeds 2^62
  std::int64_t levels = 0;  // level count actually used
  int bandwidth_bits = 0;   // for L_min
  bool alpha_within_bound = false;
  bool levels_sufficient = false;
};

// Throws DomainError for constants outside the formulas' domain,
// UntunableError when rho(H) >= 1 or a fixed gamma is not in (rho(H), 1),
// and InfeasibleEpsilonError when gamma - rho - eps <= 0.
TuningReport tune(const AggregativeProblem& p, double kappa,
                  const InitialBounds& bounds, const TuneRequest& request);

// One "name = value" line per field.
void write_report(std::ostream& out, const TuningReport& r);

// ---- Diagnostics -----------------------------------------------------------

// (||x - x*||, ||chi - 1 (x) mean chi||, ||y - 1 (x) mean y||).
Eigen::Vector3d compute_theta(const Snapshot& s, const Eigen::VectorXd& x_star,
                              int n_agents);
// (0, 2 ||e_chi||, 2 l2 ||e_chi|| + 2 ||e_y||), e = state - mirror.
Eigen::Vector3d error_vector(const Snapshot& s, double l2);

struct ContractionResult {
  std::vector<bool> ok;  // entry k covers the step k -> k+1
  double min_slack = 0.0;
  std::int64_t violations = 0;
  bool all_ok() const { return violations == 0; }
};
// Checks Theta(k+1) <= H Theta(k) + E(k) componentwise. A component passes
// when its slack is at least -rel_tol (1 + |rhs|).
ContractionResult check_contraction(const Trajectory& t, const Eigen::Matrix3d& h,
                          double l2, const Eigen::VectorXd& x_star,
                          double rel_tol = 1e-9);

struct PowerBoundResult {
  bool ok = true;
  double worst_ratio = 0.0;  // max_k ||H^k|| / (c3 (rho + eps)^k)
};
PowerBoundResult check_power_bound(const Eigen::Matrix3d& h, double epsilon, int k_max);

// Largest k with ||Theta(k)|| > C0 gamma^k, or nullopt when the envelope
// holds at every round.
std::optional<std::int64_t> theta_envelope_violation(
    const Trajectory& t, const Eigen::VectorXd& x_star, double C0, double gamma);

// J(k) = exp(gamma_J k) |f(x(k)) - f*|.
std::vector<double> performance_index(const Trajectory& t,
                                      const AggregativeProblem& p, double f_star,
                                      double gamma_J);
// Bounded when the log-slope of J over the tail half is at most
// `growth_tol`. Entries whose cost gap is at the rounding floor are skipped.
bool performance_index_bounded(const std::vector<double>& j, double gamma_J,
                               double floor, double growth_tol = 1e-3);

// ||x(k) - x*||_inf per round.
std::vector<double> residual_series(const Trajectory& t,
                                    const Eigen::VectorXd& x_star);

// Per-round ratio exp(slope) of a least-squares fit of log r(k) over the
// last tail_fraction of rounds. Values <= 1e-14 are excluded; nullopt when
// fewer than two remain.
std::optional<double> fit_linear_rate(const std::vector<double>& series,
                                      double tail_fraction);

// Max over agents-mean coordinates of |mean chi - mean g_i(x_i)| and
// |mean y - mean grad_chi f_i(x_i, chi_i)|.
std::pair<double, double> conservation_errors(const AggregativeProblem& p,
                                              const Snapshot& s);

// Rounds in which some coordinate of chi - chi_hat or y - y_hat exceeds
// l(k)/2 (plus rounding slack) while no saturation has occurred yet.
std::int64_t quantization_bound_violations(const Trajectory& t);

// Decodes every logged stream with a fresh decoder and counts rounds whose
// reconstruction differs bitwise from the logged mirror.
std::int64_t replay_mismatches(const Trajectory& t);

}  // namespace dqagt
