// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dqagt/analysis.h"
#include "dqagt/codec.h"
#include "dqagt/commands.h"
#include "dqagt/config.h"
#include "dqagt/csv.h"
#include "dqagt/engine.h"
#include "dqagt/errors.h"

using namespace dqagt;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Shared between criteria.
std::vector<Trajectory> g_quantized_runs;
std::vector<TuningReport> g_tuned_reports;
std::vector<std::string> g_untuned_notes;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

ExperimentConfig placement_config() {
  ExperimentConfig cfg = load_config(fs::path(DQAGT_SOURCE_DIR) / "configs" / "placement.ini");
  cfg.run.rounds = 5000;
  cfg.run.mode = ModeSelection::kQuantized;
  return cfg;
}

Outcome crit_quantizer_truth_table() {
  UniformQuantizer q(10);
  const std::vector<std::pair<double, std::int64_t>> table = {
      {0.0, 0}, {0.5, 0},    {-0.5, 0},   {0.75, 1},  {-0.75, -1},  {1.6, 2},
      {10.5, 10}, {12.0, 10}, {-12.0, -10}, {1e300, 10}, {-1e300, -10}};
  int wrong = 0;
  for (auto [x, want] : table) wrong += q.quantize(x) != want;
  wrong += q.saturates(10.5) ? 1 : 0;
  wrong += q.saturates(std::nextafter(10.5, 11.0)) ? 0 : 1;
  return {wrong == 0, std::to_string(table.size()) + " entries, " + std::to_string(wrong) +
                          " wrong"};
}

Outcome crit_bandwidth_bits() {
  const int b = bits_per_scalar(10);
  return {b == 5, "got " + std::to_string(b)};
}

// Undirected random graph: ring plus random chords, Metropolis weights.
MixingMatrix random_metropolis(int n, std::mt19937_64& rng) {
  MatrixXd adj = MatrixXd::Zero(n, n);
  for (int i = 0; i < n && n > 1; ++i) adj(i, (i + 1) % n) = adj((i + 1) % n, i) = 1;
  std::bernoulli_distribution chord(0.3);
  for (int i = 0; i < n; ++i)
    for (int j = i + 2; j < n; ++j)
      if (chord(rng)) adj(i, j) = adj(j, i) = 1;
  const VectorXd deg = adj.rowwise().sum();
  MatrixXd w = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adj(i, j) > 0) w(i, j) = 1.0 / (1.0 + std::max(deg(i), deg(j)));
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return MixingMatrix::from_weights(w, 1e-12);
}

Outcome crit_conservation() {
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<int> size(2, 8);
  double worst_chi = 0, worst_y = 0;
  int runs = 0;
  std::string failure;
  for (int c = 0; c < 20; ++c) {
    const int n = size(rng);
    AggregativeProblem p = [&] {
      switch (c % 3) {
        case 0: {
          std::vector<Eigen::Vector2d> targets;
          std::vector<double> gammas;
          std::uniform_real_distribution<double> t(0, 10), g(1, 100);
          for (int i = 0; i < n; ++i) {
            targets.emplace_back(t(rng), t(rng));
            gammas.push_back(g(rng));
          }
          return make_placement(targets, gammas);
        }
        case 1:
          return make_bandwidth_sharing(n, std::uniform_real_distribution<double>(0.01, 1)(rng));
        default:
          return make_quadratic_synthetic(n, 1 + c % 3, 1 + (c / 3) % 3, rng());
      }
    }();
    const MixingMatrix a = c % 4 == 0   ? build_complete(n)
                           : c % 4 == 1 ? build_ring(n, 0.5)
                                        : random_metropolis(n, rng);
    VectorXd x0(p.n_agents() * p.dim_x());
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < x0.size(); ++k) x0(k) = u(rng);
    for (CommMode mode : {CommMode::kQuantized, CommMode::kExact}) {
      RunConfig rc;
      rc.alpha = 0.5 * alpha_upper_bound(p.constants(), a.kappa());
      rc.l0 = 5.0;
      rc.gamma = 0.95;
      rc.levels = 10;
      rc.max_rounds = 300;
      rc.mode = mode;
      rc.x0 = x0;
      try {
        Trajectory t = run(p, a, rc);
        for (const auto& s : t.snapshots) {
          auto [ec, ey] = conservation_errors(p, s);
          worst_chi = std::max(worst_chi, ec);
          worst_y = std::max(worst_y, ey);
        }
        if (mode == CommMode::kQuantized) g_quantized_runs.push_back(std::move(t));
        ++runs;
      } catch (const std::exception& e) {
        failure = std::string(" run failed: ") + e.what();
      }
    }
  }
  const bool ok = failure.empty() && worst_chi <= 1e-10 && worst_y <= 1e-10;
  return {ok, std::to_string(runs) + " runs, max chi error " + fmt(worst_chi) +
                  ", max y error " + fmt(worst_y) + failure};
}

struct PlacementRun {
  std::optional<Trajectory> traj;
  std::int64_t diverged_at = -1;
};

PlacementRun run_placement(const Prepared& prep, const MixingMatrix& a, CommMode mode,
                           std::int64_t rounds, const ExperimentConfig& cfg) {
  RunConfig rc = make_run_config(cfg, prep, mode);
  rc.max_rounds = rounds;
  PlacementRun out;
  Trajectory partial;
  try {
    out.traj = run(prep.problem, a, rc, &partial);
  } catch (const DivergenceError& e) {
    out.diverged_at = e.round();
    out.traj = std::move(partial);
  }
  return out;
}

std::string residual_note(const PlacementRun& r, const VectorXd& x_star) {
  if (!r.traj || r.traj->snapshots.empty()) return "no rounds";
  const double res = (r.traj->final().x - x_star).lpNorm<Eigen::Infinity>();
  std::string s = "residual " + fmt(res) + " at round " + std::to_string(r.traj->final().round);
  if (r.diverged_at >= 0) s += ", non-finite at round " + std::to_string(r.diverged_at);
  return s;
}

// Tuned reports for the placement instance at an automatic step size; the
// configured alpha = 0.01 has rho(H) >= 1 and yields no report.
void collect_placement_reports(const ExperimentConfig& cfg, const Prepared& prep) {
  if (prep.report) {
    g_tuned_reports.push_back(*prep.report);
  } else {
    g_untuned_notes.push_back("alpha = 0.01: " + prep.tuning_failure);
  }
  for (const MixingMatrix& a : {build_complete(5), build_ring(5, 0.5)}) {
    TuneRequest req;
    req.l0 = cfg.run.l0;
    g_tuned_reports.push_back(tune(prep.problem, a.kappa(), prep.bounds, req));
  }
}

Outcome crit_placement_convergence() {
  const ExperimentConfig cfg = placement_config();
  const Prepared prep = prepare(cfg);
  collect_placement_reports(cfg, prep);

  const auto lin = solve_reference(prep.problem, 1e-12, 100, ReferenceMethod::kLinearSolve);
  const auto gd =
      solve_reference(prep.problem, 1e-12, 2000000, ReferenceMethod::kGradientDescent);
  const double oracle_gap = (lin.x_star - gd.x_star).lpNorm<Eigen::Infinity>();
  const double paper_dev =
      (*cfg.problem.reference_x - lin.x_star).lpNorm<Eigen::Infinity>();

  bool reached = false;
  std::string notes;
  for (const MixingMatrix& a : {build_complete(5), build_ring(5, 0.5)}) {
    PlacementRun r = run_placement(prep, a, CommMode::kQuantized, 5000, cfg);
    if (r.traj) g_quantized_runs.push_back(*r.traj);
    std::optional<std::int64_t> hit;
    if (r.traj) {
      for (const auto& s : r.traj->snapshots) {
        if ((s.x - lin.x_star).lpNorm<Eigen::Infinity>() <= 1e-6) {
          hit = s.round;
          break;
        }
      }
    }
    reached |= hit.has_value();
    notes += std::string(a.kappa() == 0.0 ? "complete: " : "ring: ") +
             (hit ? "reached at round " + std::to_string(*hit) : residual_note(r, lin.x_star)) +
             "; ";
  }
  std::string bound = "alpha bound (complete) " +
                      fmt(alpha_upper_bound(prep.problem.constants(), 0.0));
  return {reached && oracle_gap <= 1e-8,
          notes + "oracle gap " + fmt(oracle_gap) + ", listed optimum deviation " +
              fmt(paper_dev) + ", " + bound};
}

Outcome crit_quantized_matches_exact() {
  const ExperimentConfig cfg = placement_config();
  const Prepared prep = prepare(cfg);
  PlacementRun q = run_placement(prep, prep.mixing, CommMode::kQuantized, 2000, cfg);
  PlacementRun e = run_placement(prep, prep.mixing, CommMode::kExact, 2000, cfg);
  if (q.traj) g_quantized_runs.push_back(*q.traj);
  const VectorXd& xs = prep.reference.x_star;
  if (q.diverged_at >= 0 || e.diverged_at >= 0) {
    return {false, "quantized " + residual_note(q, xs) + "; exact " + residual_note(e, xs)};
  }
  const auto rq = residual_series(*q.traj, xs), re = residual_series(*e.traj, xs);
  const double gap = std::abs(rq.back() - re.back());
  const auto fq = fit_linear_rate(rq, 0.5), fe = fit_linear_rate(re, 0.5);
  // A tail entirely at the rounding floor counts as converged.
  const bool rates_ok = (!fq || *fq < 1.0) && (!fe || *fe < 1.0);
  return {gap < 1e-5 && rates_ok,
          "final residuals " + fmt(rq.back()) + " / " + fmt(re.back()) + ", gap " + fmt(gap) +
              ", fitted rates " + (fq ? fmt(*fq) : "floor") + " / " +
              (fe ? fmt(*fe) : "floor")};
}

Outcome crit_linear_rate_certificate() {
  int violations = 0, saturations = 0, failures = 0;
  double worst_ratio = 0;
  std::string failure;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    try {
      auto p = make_quadratic_synthetic(3, 2, 2, seed);
      const MixingMatrix a = build_ring(3, 0.5);
      const auto ref = solve_reference(p, 1e-10, 100);
      UniformSource src(seed);
      VectorXd x0(p.n_agents() * p.dim_x());
      for (int k = 0; k < x0.size(); ++k) x0(k) = src.next(-1, 1);
      TuneRequest req;
      req.l0 = 1.0;
      const TuningReport rep = tune(p, a.kappa(), measure_initial_bounds(p, x0, ref.x_star), req);
      g_tuned_reports.push_back(rep);
      RunConfig rc;
      rc.alpha = rep.alpha;
      rc.l0 = rep.l0;
      rc.gamma = rep.gamma;
      rc.levels = rep.L_min;
      rc.max_rounds = 500;
      rc.x0 = x0;
      Trajectory t = run(p, a, rc);
      violations += theta_envelope_violation(t, ref.x_star, rep.C0, rep.gamma).has_value();
      saturations += t.final().saturations > 0;
      for (const auto& s : t.snapshots) {
        const double env = rep.C0 * std::pow(rep.gamma, static_cast<double>(s.round));
        worst_ratio = std::max(worst_ratio, compute_theta(s, ref.x_star, 3).norm() / env);
      }
      g_quantized_runs.push_back(std::move(t));
    } catch (const std::exception& e) {
      ++failures;
      failure = std::string(", error: ") + e.what();
    }
  }
  return {violations == 0 && saturations == 0 && failures == 0,
          "10 seeds, " + std::to_string(violations) + " envelope violations, " +
              std::to_string(saturations) + " saturating runs, worst ||Theta||/(C0 gamma^k) " +
              fmt(worst_ratio) + failure};
}

Outcome crit_spectral_certificates() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lg(-1.0, 1.5), frac(0.01, 1.0), kd(0.0, 0.95);
  int rho_fail = 0, det_fail = 0;
  double worst_rho = 0, worst_det = 0;
  std::string example;
  for (int t = 0; t < 100; ++t) {
    RegularityConstants c;
    c.l1 = std::pow(10.0, lg(rng));
    c.mu = c.l1 * frac(rng);
    c.l2 = std::pow(10.0, lg(rng));
    c.l3 = std::pow(10.0, lg(rng));
    const double kappa = kd(rng);
    const double amax = alpha_upper_bound(c, kappa);
    const double rho = spectral_radius(build_H(0.9 * amax, c, kappa));
    const double det =
        std::abs((Eigen::Matrix3d::Identity() - build_H(amax, c, kappa)).determinant());
    worst_rho = std::max(worst_rho, rho);
    worst_det = std::max(worst_det, det);
    if (rho >= 1.0) {
      if (rho_fail++ == 0) {
        example = " (e.g. mu " + fmt(c.mu) + ", l1 " + fmt(c.l1) + ", l2 " + fmt(c.l2) +
                  ", l3 " + fmt(c.l3) + ", kappa " + fmt(kappa) + ": mu alpha = " +
                  fmt(0.9 * amax * c.mu) + ")";
      }
    }
    det_fail += det > 1e-9;
  }
  return {rho_fail == 0 && det_fail == 0,
          "100 tuples, " + std::to_string(rho_fail) + " with rho >= 1 (max " + fmt(worst_rho) +
              "), " + std::to_string(det_fail) + " det violations (max " + fmt(worst_det) +
              ")" + example};
}

Outcome crit_power_bound() {
  int fails = 0;
  double worst = 0;
  for (const auto& r : g_tuned_reports) {
    const auto res = check_power_bound(r.H, r.epsilon, 200);
    fails += !res.ok;
    worst = std::max(worst, res.worst_ratio);
  }
  std::string note;
  for (const auto& s : g_untuned_notes) note += "; untunable " + s;
  return {fails == 0 && !g_tuned_reports.empty(),
          std::to_string(g_tuned_reports.size()) + " reports, " + std::to_string(fails) +
              " failing, worst ratio " + fmt(worst) + note};
}

Outcome crit_mirror_equality() {
  std::int64_t mismatches = 0, live = 0;
  for (const auto& t : g_quantized_runs) {
    mismatches += replay_mismatches(t);
    for (const auto& s : t.snapshots) live += s.mirror_mismatches;
  }
  return {mismatches == 0 && live == 0 && !g_quantized_runs.empty(),
          std::to_string(g_quantized_runs.size()) + " quantized runs, " +
              std::to_string(mismatches) + " replay mismatches, " + std::to_string(live) +
              " live mismatches"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome crit_determinism() {
  ExperimentConfig cfg = placement_config();
  std::vector<std::string> files;
  int code = 0;
  for (const char* tag : {"a", "b"}) {
    const fs::path dir = fs::temp_directory_path() / (std::string("dqagt_acceptance_") + tag);
    fs::remove_all(dir);
    cfg.output.directory = dir.string();
    std::ostringstream log;
    code = cmd_run(cfg, log);
    files.push_back(slurp(dir / "trajectory.csv"));
  }
  const bool same = !files[0].empty() && files[0] == files[1];
  return {same, std::string(same ? "identical" : "different") + " trajectory.csv (" +
                    std::to_string(files[0].size()) + " bytes, run exit code " +
                    std::to_string(code) + ")"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime limit
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "quantizer truth table", 1, crit_quantizer_truth_table},
      {2, "bits per scalar at L = 10", 0, crit_bandwidth_bits},
      {3, "conservation identities", 30, crit_conservation},
      {4, "placement convergence to oracle", 10, crit_placement_convergence},
      {5, "quantized matches exact", 10, crit_quantized_matches_exact},
      {6, "linear-rate certificate", 60, crit_linear_rate_certificate},
      {7, "spectral certificates", 5, crit_spectral_certificates},
      {8, "H^k bound on tuned reports", 5, crit_power_bound},
      {9, "mirror equality on replay", 0, crit_mirror_equality},
      {10, "deterministic rerun", 0, crit_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += ", over the " + fmt(c.budget_s) + " s budget";
    }
    failed += !o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name
              << ": " << o.detail << " [" << fmt(secs) << " s]\n";
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
