#include "dqagt/analysis.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Dense>

#include "dqagt/codec.h"
#include "dqagt/csv.h"
#include "dqagt/errors.h"

namespace dqagt {
namespace {

using Eigen::Matrix3d;
using Eigen::VectorXd;
using cd = std::complex<double>;

void check_constants(const RegularityConstants& c, double kappa) {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (bad(c.mu) || bad(c.l1) || bad(c.l2) || bad(c.l3) || !(c.mu > 0.0) ||
      !(c.l1 > 0.0) || !(c.l2 >= 0.0) || !(c.l3 > 0.0)) {
    throw DomainError("constants need mu > 0, l1 > 0, l2 >= 0, l3 > 0 (got mu=" +
                      format_double(c.mu) + ", l1=" + format_double(c.l1) +
                      ", l2=" + format_double(c.l2) + ", l3=" + format_double(c.l3) + ")");
  }
  if (!(kappa >= 0.0 && kappa < 1.0)) {
    throw DomainError("kappa must lie in [0, 1), got " + format_double(kappa));
  }
}

}  // namespace

double alpha_upper_bound(const RegularityConstants& c, double kappa) {
  check_constants(c, kappa);
  const double gap = 1.0 - kappa;
  const double a = c.mu + c.l1 + c.l1 * c.l3;
  const double b = gap * (c.l1 + c.l2 + c.l2 * c.l3) + 2.0 * c.l2 * c.l3;
  return c.mu * gap * gap / (c.l3 * a * b);
}

Matrix3d build_H(double alpha, const RegularityConstants& c, double kappa) {
  const double mu = c.mu, l1 = c.l1, l2 = c.l2, l3 = c.l3;
  Matrix3d h;
  h << 1.0 - mu * alpha, alpha * l1, alpha * l3,
      alpha * l1 * l3 * (1.0 + l3), kappa + alpha * l1 * l3, alpha * l3 * l3,
      alpha * l1 * l2 * (1.0 + l3) * (1.0 + l3), alpha * l1 * l2 * (1.0 + l3) + 2.0 * l2,
      kappa + alpha * l2 * l3 * (1.0 + l3);
  return h;
}

std::array<cd, 3> eigenvalues_3x3(const Matrix3d& h) {
  // lambda^3 + a lambda^2 + b lambda + c
  const double a = -h.trace();
  const double b = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0) + h(0, 0) * h(2, 2) -
                   h(0, 2) * h(2, 0) + h(1, 1) * h(2, 2) - h(1, 2) * h(2, 1);
  const double c = -h.determinant();
  auto poly = [&](cd z) { return ((z + a) * z + b) * z + c; };
  auto dpoly = [&](cd z) { return (3.0 * z + 2.0 * a) * z + b; };

  // Depressed cubic t^3 + p t + q with lambda = t - a/3.
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const cd disc = std::sqrt(cd(q * q / 4.0 + p * p * p / 27.0));
  cd u = std::pow(-q / 2.0 + disc, 1.0 / 3.0);
  if (std::abs(u) < 1e-300) u = std::pow(-q / 2.0 - disc, 1.0 / 3.0);
  const cd omega(-0.5, std::sqrt(3.0) / 2.0);
  std::array<cd, 3> roots;
  for (int k = 0; k < 3; ++k) {
    cd t;
    if (std::abs(u) < 1e-300) {
      t = 0.0;
    } else {
      const cd uk = u * std::pow(omega, k);
      t = uk - p / (3.0 * uk);
    }
    cd z = t - a / 3.0;
    for (int it = 0; it < 4; ++it) {
      const cd d = dpoly(z);
      if (std::abs(d) == 0.0) break;
      const cd next = z - poly(z) / d;
      if (!std::isfinite(next.real()) || !std::isfinite(next.imag())) break;
      if (std::abs(poly(next)) > std::abs(poly(z))) break;
      z = next;
    }
    roots[k] = z;
  }
  return roots;
}

double spectral_radius(const Matrix3d& h) {
  double rho = 0.0;
  for (const cd& z : eigenvalues_3x3(h)) rho = std::max(rho, std::abs(z));
  return rho;
}

double spectral_radius_power(const Matrix3d& h, int max_iter, double tol) {
  constexpr int kWindow = 100;
  Eigen::Vector3d v(1.0, 1.0, 1.0);
  v.normalize();
  std::vector<double> history;
  history.reserve(kWindow + 1);
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::Vector3d w = h * v;
    est = w.norm();
    if (est == 0.0) return 0.0;
    v = w / est;
    history.push_back(est);
    if (static_cast<int>(history.size()) > kWindow) {
      if (std::abs(est - history.front()) <= tol * est) break;
      history.erase(history.begin());
    }
  }
  return est;
}

double choose_gamma(double rho, double margin) {
  if (!(rho < 1.0)) {
    throw UntunableError("rho(H) = " + format_double(rho) +
                         " is not below one; lower alpha");
  }
  if (!(margin > 0.0 && margin < 1.0)) {
    throw ParameterError("gamma margin must lie in (0, 1)");
  }
  return rho + margin * (1.0 - rho);
}

double spectral_norm3(const Matrix3d& h) {
  Eigen::JacobiSVD<Matrix3d> svd(h);
  return svd.singularValues()(0);
}

double power_bound_constant(const Matrix3d& h, double epsilon) {
  const double n2 = spectral_norm3(h);
  const double s = 4.0 * n2 * n2;
  const double e2 = epsilon * epsilon;
  return 3.0 * std::sqrt(3.0) * std::max(s / e2, e2 / s);
}

double compute_zeta(double alpha, const RegularityConstants& c) {
  const double l1 = c.l1, l2 = c.l2, l3 = c.l3;
  return std::max({alpha * l1 * l2 * (1.0 + l3) + alpha * l1 * l3 * (1.0 + l3),
                   l2 + alpha * l1 * l2 + alpha * l1 * l3 + 2.0,
                   alpha * l3 * l2 + alpha * l3 * l3 + 2.0});
}

double compute_C1(double l2, int n_agents, int dim_agg, double l0) {
  return 2.0 * (l2 + 1.0) * std::sqrt(static_cast<double>(n_agents) * dim_agg) * l0;
}

LevelTerms level_terms(double l0, double gamma, double zeta, double C0,
                       double C1, double c1, double c2) {
  return {(zeta * C0 + 3.0 * C1) / (l0 * gamma),
          std::sqrt(4.0 * c1 * c1 + 4.0 * c2 * c2) / l0};
}

std::int64_t level_bound(double l0, double gamma, double zeta, double C0,
                         double C1, double c1, double c2) {
  if (!(l0 > 0.0) || !(gamma > 0.0)) {
    throw DomainError("level bound needs l0 > 0 and gamma > 0");
  }
  const LevelTerms t = level_terms(l0, gamma, zeta, C0, C1, c1, c2);
  // 2L + 1 >= 2m + 1  <=>  L >= m.
  const double m = std::ceil(std::max(t.tracking, t.initial));
  if (!std::isfinite(m) || m >= 0x1.0p62) {
    throw UntunableError("level bound " + format_double(m) +
                         " does not fit a 64-bit integer");
  }
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(m));
}

int bandwidth_bits(std::int64_t levels) { return bits_per_scalar(levels); }

InitialBounds measure_initial_bounds(const AggregativeProblem& p,
                                     const VectorXd& x0, const VectorXd& x_star) {
  InitialBounds b;
  b.c0 = (x0 - x_star).lpNorm<Eigen::Infinity>();
  const int n = p.dim_x();
  for (int i = 0; i < p.n_agents(); ++i) {
    VectorXd xi = x0.segment(i * n, n);
    VectorXd chi = p.agent(i).aggregate(xi);
    b.c1 = std::max(b.c1, chi.lpNorm<Eigen::Infinity>());
    b.c2 = std::max(b.c2, p.agent(i).grad_chi(xi, chi).lpNorm<Eigen::Infinity>());
  }
  return b;
}

TuningReport tune(const AggregativeProblem& p, double kappa,
                  const InitialBounds& bounds, const TuneRequest& request) {
  const RegularityConstants& c = p.constants();
  TuningReport r;
  r.constants = c;
  r.kappa = kappa;
  r.n_agents = p.n_agents();
  r.dim_x = p.dim_x();
  r.dim_agg = p.dim_agg();
  r.alpha_max = alpha_upper_bound(c, kappa);
  r.l0 = request.l0;
  r.initial = bounds;
  if (!(request.l0 > 0.0)) throw ParameterError("l0 must be positive");

  if (request.alpha) {
    r.alpha = *request.alpha;
    if (!(r.alpha > 0.0)) throw ParameterError("alpha must be positive");
  } else {
    if (!(request.alpha_fraction > 0.0 && request.alpha_fraction < 1.0)) {
      throw ParameterError("alpha_fraction must lie in (0, 1)");
    }
    r.alpha = request.alpha_fraction * r.alpha_max;
  }
  r.alpha_within_bound = r.alpha < r.alpha_max;
  r.H = build_H(r.alpha, c, kappa);
  r.H_norm = spectral_norm3(r.H);
  r.rho_H = spectral_radius(r.H);
  if (!(r.rho_H < 1.0)) {
    throw UntunableError("rho(H) = " + format_double(r.rho_H) + " at alpha = " +
                         format_double(r.alpha) + "; the step-size bound is " +
                         format_double(r.alpha_max) + ", lower alpha");
  }
  if (request.gamma) {
    r.gamma = *request.gamma;
    if (!(r.gamma > r.rho_H && r.gamma < 1.0)) {
      throw UntunableError("gamma = " + format_double(r.gamma) +
                           " is not in (rho(H), 1) with rho(H) = " +
                           format_double(r.rho_H));
    }
  } else {
    r.gamma = choose_gamma(r.rho_H, request.gamma_margin);
  }
  r.epsilon = std::min(r.gamma - r.rho_H, 2.0 * r.H_norm) / 2.0;
  const double room = r.gamma - r.rho_H - r.epsilon;
  if (!(room > 0.0) || !(r.epsilon > 0.0)) {
    throw InfeasibleEpsilonError("gamma - rho(H) - eps = " + format_double(room) +
                                 " is not positive");
  }
  r.c3 = power_bound_constant(r.H, r.epsilon);
  r.zeta = compute_zeta(r.alpha, c);
  r.C1 = compute_C1(c.l2, r.n_agents, r.dim_agg, r.l0);
  const double nn = static_cast<double>(r.n_agents) * r.dim_x;
  const double nr = static_cast<double>(r.n_agents) * r.dim_agg;
  r.C0 = r.c3 * std::sqrt(nn * bounds.c0 * bounds.c0 +
                          4.0 * nr * (bounds.c1 * bounds.c1 + bounds.c2 * bounds.c2)) +
         r.c3 * r.C1 / room;
  r.terms = level_terms(r.l0, r.gamma, r.zeta, r.C0, r.C1, bounds.c1, bounds.c2);
  try {
    r.L_min = level_bound(r.l0, r.gamma, r.zeta, r.C0, r.C1, bounds.c1, bounds.c2);
    r.bandwidth_bits = bandwidth_bits(r.L_min);
  } catch (const UntunableError&) {
    if (!request.levels) throw;
    r.L_min = 0;
  }
  r.levels = request.levels ? *request.levels : r.L_min;
  if (r.levels < 1) throw ParameterError("L must be >= 1");
  r.levels_sufficient = r.L_min > 0 && r.levels >= r.L_min;
  return r;
}

void write_report(std::ostream& out, const TuningReport& r) {
  auto line = [&](const char* name, double v) {
    out << name << " = " << format_double(v) << "\n";
  };
  auto iline = [&](const char* name, long long v) {
    out << name << " = " << v << "\n";
  };
  iline("n_agents", r.n_agents);
  iline("dim_x", r.dim_x);
  iline("dim_agg", r.dim_agg);
  line("mu", r.constants.mu);
  line("l1", r.constants.l1);
  line("l2", r.constants.l2);
  line("l3", r.constants.l3);
  line("kappa", r.kappa);
  line("alpha_max", r.alpha_max);
  line("alpha", r.alpha);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const std::string key = "H_" + std::to_string(i + 1) + std::to_string(j + 1);
      line(key.c_str(), r.H(i, j));
    }
  }
  line("H_norm", r.H_norm);
  line("rho_H", r.rho_H);
  line("gamma", r.gamma);
  line("epsilon", r.epsilon);
  line("c3", r.c3);
  line("zeta", r.zeta);
  line("C0", r.C0);
  line("C1", r.C1);
  line("c0", r.initial.c0);
  line("c1", r.initial.c1);
  line("c2", r.initial.c2);
  line("l0", r.l0);
  line("level_term_tracking", r.terms.tracking);
  line("level_term_initial", r.terms.initial);
  if (r.L_min > 0) {
    iline("L_min", r.L_min);
    iline("bandwidth_bits", r.bandwidth_bits);
  } else {
    out << "L_min = unrepresentable\nbandwidth_bits = unrepresentable\n";
  }
  iline("L", r.levels);
  iline("bits_per_scalar", bits_per_scalar(r.levels));
  out << "alpha_within_bound = " << (r.alpha_within_bound ? "true" : "false") << "\n";
  out << "levels_sufficient = " << (r.levels_sufficient ? "true" : "false") << "\n";
}

Eigen::Vector3d compute_theta(const Snapshot& s, const VectorXd& x_star,
                              int n_agents) {
  return {(s.x - x_star).norm(), consensus_error(s.chi, n_agents),
          consensus_error(s.y, n_agents)};
}

Eigen::Vector3d error_vector(const Snapshot& s, double l2) {
  const double e_chi = (s.chi - s.chi_hat).norm();
  const double e_y = (s.y - s.y_hat).norm();
  return {0.0, 2.0 * e_chi, 2.0 * l2 * e_chi + 2.0 * e_y};
}

ContractionResult check_contraction(const Trajectory& t, const Matrix3d& h, double l2,
                          const VectorXd& x_star, double rel_tol) {
  ContractionResult res;
  res.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < t.snapshots.size(); ++k) {
    const Eigen::Vector3d lhs = compute_theta(t.snapshots[k + 1], x_star, t.n_agents);
    const Eigen::Vector3d rhs =
        h * compute_theta(t.snapshots[k], x_star, t.n_agents) +
        error_vector(t.snapshots[k], l2);
    bool ok = true;
    for (int c = 0; c < 3; ++c) {
      const double slack = rhs(c) - lhs(c);
      res.min_slack = std::min(res.min_slack, slack);
      if (slack < -rel_tol * (1.0 + std::abs(rhs(c)))) ok = false;
    }
    res.ok.push_back(ok);
    if (!ok) ++res.violations;
  }
  return res;
}

PowerBoundResult check_power_bound(const Matrix3d& h, double epsilon, int k_max) {
  PowerBoundResult res;
  const double c3 = power_bound_constant(h, epsilon);
  const double base = spectral_radius(h) + epsilon;
  Matrix3d power = Matrix3d::Identity();
  for (int k = 0; k <= k_max; ++k) {
    const double bound = c3 * std::pow(base, k);
    const double ratio = spectral_norm3(power) / bound;
    res.worst_ratio = std::max(res.worst_ratio, ratio);
    if (ratio > 1.0) res.ok = false;
    power = power * h;
  }
  return res;
}

std::optional<std::int64_t> theta_envelope_violation(const Trajectory& t,
                                                     const VectorXd& x_star,
                                                     double C0, double gamma) {
  std::optional<std::int64_t> last;
  for (const auto& s : t.snapshots) {
    const double lhs = compute_theta(s, x_star, t.n_agents).norm();
    if (lhs > C0 * std::pow(gamma, static_cast<double>(s.round))) last = s.round;
  }
  return last;
}

std::vector<double> performance_index(const Trajectory& t,
                                      const AggregativeProblem& p, double f_star,
                                      double gamma_J) {
  std::vector<double> out;
  out.reserve(t.snapshots.size());
  for (const auto& s : t.snapshots) {
    out.push_back(std::exp(gamma_J * static_cast<double>(s.round)) *
                  std::abs(eval_global(p, s.x) - f_star));
  }
  return out;
}

bool performance_index_bounded(const std::vector<double>& j, double gamma_J,
                               double floor, double growth_tol) {
  const std::size_t start = j.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t k = start; k < j.size(); ++k) {
    if (!std::isfinite(j[k])) return false;
    const double gap = j[k] * std::exp(-gamma_J * static_cast<double>(k));
    if (gap <= floor) continue;
    const double x = static_cast<double>(k), y = std::log(j[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++count;
  }
  if (count < 2) return true;
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return slope <= growth_tol;
}

std::vector<double> residual_series(const Trajectory& t, const VectorXd& x_star) {
  std::vector<double> out;
  out.reserve(t.snapshots.size());
  for (const auto& s : t.snapshots) {
    out.push_back((s.x - x_star).lpNorm<Eigen::Infinity>());
  }
  return out;
}

std::optional<double> fit_linear_rate(const std::vector<double>& series,
                                      double tail_fraction) {
  if (series.empty()) return std::nullopt;
  const double frac = std::clamp(tail_fraction, 0.0, 1.0);
  const auto n = series.size();
  const auto start =
      n - std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(frac * n)));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t k = start; k < n; ++k) {
    if (!(series[k] > 1e-14) || !std::isfinite(series[k])) continue;
    const double x = static_cast<double>(k), y = std::log(series[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++count;
  }
  if (count < 2) return std::nullopt;
  const double denom = count * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  return std::exp((count * sxy - sx * sy) / denom);
}

std::pair<double, double> conservation_errors(const AggregativeProblem& p,
                                              const Snapshot& s) {
  const int n_agents = p.n_agents(), n = p.dim_x(), r = p.dim_agg();
  VectorXd g_mean = VectorXd::Zero(r), d_mean = VectorXd::Zero(r);
  for (int i = 0; i < n_agents; ++i) {
    VectorXd xi = s.x.segment(i * n, n);
    g_mean += p.agent(i).aggregate(xi);
    d_mean += p.agent(i).grad_chi(xi, s.chi.segment(i * r, r));
  }
  g_mean /= n_agents;
  d_mean /= n_agents;
  return {(block_mean(s.chi, n_agents) - g_mean).lpNorm<Eigen::Infinity>(),
          (block_mean(s.y, n_agents) - d_mean).lpNorm<Eigen::Infinity>()};
}

std::int64_t quantization_bound_violations(const Trajectory& t) {
  if (t.mode == CommMode::kExact) return 0;
  const ScalingSchedule schedule(t.l0, t.gamma);
  std::int64_t bad = 0;
  for (const auto& s : t.snapshots) {
    if (s.saturations > 0) break;
    const double half = schedule.at(s.round) / 2.0;
    bool ok = true;
    for (const auto* pair : {&s.chi, &s.y}) {
      const VectorXd& v = *pair;
      const VectorXd& hat = pair == &s.chi ? s.chi_hat : s.y_hat;
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        const double slack = 1e-12 * half + 4e-16 * std::max(std::abs(v(k)), std::abs(hat(k)));
        if (std::abs(v(k) - hat(k)) > half + slack) ok = false;
      }
    }
    if (!ok) ++bad;
  }
  return bad;
}

std::int64_t replay_mismatches(const Trajectory& t) {
  if (t.mode == CommMode::kExact || t.frames.empty()) return 0;
  const UniformQuantizer q(t.levels);
  const ScalingSchedule schedule(t.l0, t.gamma);
  const int r = t.dim_agg;
  std::int64_t bad = 0;
  for (int i = 0; i < t.n_agents; ++i) {
    ChannelCodec chi_dec(q, schedule, r), y_dec(q, schedule, r);
    for (std::size_t k = 0; k < t.frames.size(); ++k) {
      const Snapshot& s = t.snapshots[k];
      const VectorXd& chi = chi_dec.decode(t.frames[k].chi[i]);
      const VectorXd& y = y_dec.decode(t.frames[k].y[i]);
      if (chi != s.chi_hat.segment(i * r, r) || y != s.y_hat.segment(i * r, r)) ++bad;
    }
  }
  return bad;
}

}  // namespace dqagt
