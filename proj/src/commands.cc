#include "dqagt/commands.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dqagt/codec.h"
#include "dqagt/csv.h"
#include "dqagt/errors.h"

namespace dqagt {
namespace {

namespace fs = std::filesystem;
using Eigen::VectorXd;

constexpr double kReferenceTol = 1e-8;
constexpr double kConservationTol = 1e-10;
constexpr double kFixedPointTol = 1e-9;

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const ConfigurationError& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  } catch (const RunFailure& e) {
    log << "failure: " << e.what() << "\n";
    return 1;
  }
}

fs::path output_dir(const ExperimentConfig& cfg) {
  fs::path dir(cfg.output.directory);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::vector<CommMode> modes_of(ModeSelection sel) {
  switch (sel) {
    case ModeSelection::kExact: return {CommMode::kExact};
    case ModeSelection::kBoth: return {CommMode::kQuantized, CommMode::kExact};
    case ModeSelection::kQuantized: break;
  }
  return {CommMode::kQuantized};
}

std::string suffixed(const std::string& stem, CommMode mode, bool both) {
  return both ? stem + "_" + to_string(mode) + ".csv" : stem + ".csv";
}

void write_diagnostics(std::ostream& out, const Trajectory& t, const Prepared& prep,
                       double gamma_J) {
  const Eigen::Matrix3d h =
      build_H(prep.alpha, prep.problem.constants(), prep.mixing.kappa());
  const double l2 = prep.problem.constants().l2;
  const ContractionResult l3 = check_contraction(t, h, l2, prep.reference.x_star);
  const auto j = performance_index(t, prep.problem, prep.reference.f_star, gamma_J);
  out << "round,theta_1,theta_2,theta_3,e_2,e_3,J,contraction_ok,consensus_chi,"
         "consensus_y,conservation_chi,conservation_y\n";
  for (std::size_t k = 0; k < t.snapshots.size(); ++k) {
    const Snapshot& s = t.snapshots[k];
    const Eigen::Vector3d theta = compute_theta(s, prep.reference.x_star, t.n_agents);
    const Eigen::Vector3d e = error_vector(s, l2);
    const auto [cons_chi, cons_y] = conservation_errors(prep.problem, s);
    out << s.round;
    for (int c = 0; c < 3; ++c) out << ',' << format_double(theta(c));
    out << ',' << format_double(e(1)) << ',' << format_double(e(2)) << ','
        << format_double(j[k]) << ',';
    // The check covers the step into round k; round 0 has none.
    if (k > 0) out << (l3.ok[k - 1] ? 1 : 0);
    out << ',' << format_double(s.consensus_chi) << ',' << format_double(s.consensus_y)
        << ',' << format_double(cons_chi) << ',' << format_double(cons_y) << "\n";
  }
}

void write_kv(std::ostream& out, const std::string& key, const std::string& value) {
  out << key << " = " << value << "\n";
}

std::string join(const VectorXd& v) {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) s += ", ";
    s += format_double(v(k));
  }
  return s;
}

void summarize(std::ostream& out, const Trajectory& t, const Prepared& prep,
               const ExperimentConfig& cfg, const std::string& prefix) {
  const auto residuals = residual_series(t, prep.reference.x_star);
  const auto rate = fit_linear_rate(residuals, 0.5);
  const auto j = performance_index(t, prep.problem, prep.reference.f_star, cfg.run.gamma_J);
  const double floor = 1e-13 * std::max(1.0, std::abs(prep.reference.f_star));
  const Snapshot& last = t.final();
  write_kv(out, prefix + "rounds_run", std::to_string(t.rounds_run()));
  write_kv(out, prefix + "final_residual_inf", format_double(residuals.back()));
  write_kv(out, prefix + "fitted_rate", rate ? format_double(*rate) : "undefined");
  write_kv(out, prefix + "total_bits", std::to_string(last.bits));
  write_kv(out, prefix + "total_bits_nonzero", std::to_string(last.bits_nonzero));
  write_kv(out, prefix + "total_bits_per_edge", std::to_string(last.bits_edges));
  write_kv(out, prefix + "saturations", std::to_string(last.saturations));
  write_kv(out, prefix + "mirror_mismatches", std::to_string(last.mirror_mismatches));
  write_kv(out, prefix + "J_final", format_double(j.back()));
  write_kv(out, prefix + "J_bounded",
           performance_index_bounded(j, cfg.run.gamma_J, floor) ? "true" : "false");
  write_kv(out, prefix + "x_final", join(last.x));
}

// One pass/fail line of the verification table.
struct CheckRow {
  std::string name;
  std::string mode;
  std::string status;  // pass, FAIL, skipped
  std::string detail;
};

}  // namespace

Prepared prepare(const ExperimentConfig& cfg) {
  AggregativeProblem problem = build_problem(cfg);
  MixingMatrix mixing = build_graph(cfg, problem.n_agents());
  VectorXd x0 = initial_point(cfg, problem);
  ReferenceSolution ref = solve_reference(problem, kReferenceTol, 1'000'000);
  InitialBounds bounds = measure_initial_bounds(problem, x0, ref.x_star);
  Prepared prep{std::move(problem), std::move(mixing), std::move(x0), std::move(ref),
                bounds, std::nullopt, {}, 0.0, 0.0, 0};

  TuneRequest req;
  req.alpha = cfg.run.alpha;
  req.alpha_fraction = cfg.run.alpha_fraction;
  req.gamma = cfg.run.gamma;
  req.gamma_margin = cfg.run.gamma_margin;
  req.l0 = cfg.run.l0;
  req.levels = cfg.run.levels;
  const bool all_fixed = cfg.run.alpha && cfg.run.gamma && cfg.run.levels;
  try {
    prep.report = tune(prep.problem, prep.mixing.kappa(), prep.bounds, req);
    prep.alpha = prep.report->alpha;
    prep.gamma = prep.report->gamma;
    prep.levels = prep.report->levels;
  } catch (const ConfigurationError& e) {
    if (!all_fixed) throw;
    prep.tuning_failure = e.what();
    prep.alpha = *cfg.run.alpha;
    prep.gamma = *cfg.run.gamma;
    prep.levels = *cfg.run.levels;
  }
  return prep;
}

RunConfig make_run_config(const ExperimentConfig& cfg, const Prepared& prep,
                          CommMode mode) {
  RunConfig rc;
  rc.alpha = prep.alpha;
  rc.l0 = cfg.run.l0;
  rc.gamma = prep.gamma;
  rc.levels = prep.levels;
  rc.max_rounds = cfg.run.rounds;
  rc.mode = mode;
  rc.x0 = prep.x0;
  rc.strict_saturation = cfg.run.strict_saturation;
  rc.stop_tol = cfg.run.stop_tol;
  return rc;
}

int cmd_tune(const ExperimentConfig& cfg, std::ostream& log) {
  return guarded(log, [&] {
    AggregativeProblem problem = build_problem(cfg);
    MixingMatrix mixing = build_graph(cfg, problem.n_agents());
    const VectorXd x0 = initial_point(cfg, problem);
    const ReferenceSolution ref = solve_reference(problem, kReferenceTol, 1'000'000);
    TuneRequest req;
    req.alpha = cfg.run.alpha;
    req.alpha_fraction = cfg.run.alpha_fraction;
    req.gamma = cfg.run.gamma;
    req.gamma_margin = cfg.run.gamma_margin;
    req.l0 = cfg.run.l0;
    req.levels = cfg.run.levels;
    const TuningReport report = tune(problem, mixing.kappa(),
                                     measure_initial_bounds(problem, x0, ref.x_star), req);
    std::ostringstream text;
    write_report(text, report);
    auto out = open_out(output_dir(cfg) / "tuning_report.txt");
    out << text.str();
    log << text.str();
    return 0;
  });
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  return guarded(log, [&] {
    const Prepared prep = prepare(cfg);
    const fs::path dir = output_dir(cfg);
    {
      auto out = open_out(dir / "tuning_report.txt");
      if (prep.report) {
        write_report(out, *prep.report);
      } else {
        out << "certified = false\nreason = " << prep.tuning_failure << "\n";
      }
    }
    std::ostringstream summary;
    write_kv(summary, "problem", prep.problem.name());
    write_kv(summary, "n_agents", std::to_string(prep.problem.n_agents()));
    write_kv(summary, "graph", cfg.graph.kind);
    write_kv(summary, "kappa", format_double(prep.mixing.kappa()));
    write_kv(summary, "alpha", format_double(prep.alpha));
    write_kv(summary, "l0", format_double(cfg.run.l0));
    write_kv(summary, "gamma", format_double(prep.gamma));
    write_kv(summary, "L", std::to_string(prep.levels));
    write_kv(summary, "bits_per_scalar", std::to_string(bits_per_scalar(prep.levels)));
    const bool certified = prep.report && prep.report->alpha_within_bound &&
                           prep.report->levels_sufficient;
    write_kv(summary, "certified", certified ? "true" : "false");
    if (!prep.report) write_kv(summary, "certification_failure", prep.tuning_failure);
    if (!cfg.run.x0) {
      write_kv(summary, "x0_seed", std::to_string(cfg.run.x0_seed));
      write_kv(summary, "x0_box", format_double(cfg.run.x0_low) + ", " +
                                      format_double(cfg.run.x0_high));
    }
    write_kv(summary, "x_star", join(prep.reference.x_star));
    write_kv(summary, "chi_star", join(prep.reference.chi_star));
    write_kv(summary, "f_star", format_double(prep.reference.f_star));
    if (cfg.problem.reference_x) {
      const VectorXd& ref = *cfg.problem.reference_x;
      write_kv(summary, "reference_x_deviation_inf",
               ref.size() == prep.reference.x_star.size()
                   ? format_double((ref - prep.reference.x_star).lpNorm<Eigen::Infinity>())
                   : std::string("length mismatch"));
    }

    const auto modes = modes_of(cfg.run.mode);
    const bool both = modes.size() > 1;
    std::vector<Trajectory> runs;
    for (CommMode mode : modes) {
      Trajectory t;
      try {
        t = run(prep.problem, prep.mixing, make_run_config(cfg, prep, mode), &t);
      } catch (const DivergenceError& e) {
        if (cfg.output.write_trajectory) {
          auto out = open_out(dir / suffixed("trajectory", mode, both));
          write_trajectory_csv(out, t, residual_series(t, prep.reference.x_star));
        }
        log << "failure: " << to_string(mode) << " run diverged at round " << e.round()
            << " (alpha = " << format_double(prep.alpha) << ", step-size bound "
            << (prep.report ? format_double(prep.report->alpha_max) : "n/a") << "): "
            << e.what() << "\n";
        auto out = open_out(dir / "summary.txt");
        out << summary.str();
        write_kv(out, to_string(mode) + ".diverged_at_round", std::to_string(e.round()));
        return 1;
      } catch (const SaturationError& e) {
        log << "failure: " << e.what() << "\n";
        auto out = open_out(dir / "summary.txt");
        out << summary.str();
        write_kv(out, to_string(mode) + ".saturated_at_step", std::to_string(e.round()));
        return 1;
      }
      log << to_string(mode) << ": " << t.rounds_run() << " rounds in "
          << format_double(t.wall_seconds) << " s\n";
      if (cfg.output.write_trajectory) {
        auto out = open_out(dir / suffixed("trajectory", mode, both));
        write_trajectory_csv(out, t, residual_series(t, prep.reference.x_star));
      }
      {
        auto out = open_out(dir / suffixed("diagnostics", mode, both));
        write_diagnostics(out, t, prep, cfg.run.gamma_J);
      }
      if (mode == CommMode::kQuantized) {
        auto out = open_out(dir / "codes.csv");
        write_code_stream(out, code_records(t), t.dim_agg);
      }
      summarize(summary, t, prep, cfg, both ? to_string(mode) + "." : "");
      runs.push_back(std::move(t));
    }
    if (both) {
      double divergence = 0.0;
      const auto& a = runs[0].snapshots;
      const auto& b = runs[1].snapshots;
      for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
        divergence = std::max(divergence, (a[k].x - b[k].x).lpNorm<Eigen::Infinity>());
      }
      write_kv(summary, "max_mode_divergence_inf", format_double(divergence));
    }
    auto out = open_out(dir / "summary.txt");
    out << summary.str();
    log << summary.str();
    return 0;
  });
}

int cmd_sweep(const ExperimentConfig& cfg, const std::vector<std::int64_t>& levels,
              std::ostream& log) {
  return guarded(log, [&] {
    if (levels.empty()) throw ConfigError("sweep needs at least one L (--levels)");
    for (auto l : levels) {
      if (l < 1) throw ConfigError("sweep levels must be >= 1");
    }
    std::ostringstream table;
    table << "L,bits_per_scalar,total_bits,final_residual,saturations,status\n";
    for (auto level : levels) {
      ExperimentConfig row_cfg = cfg;
      row_cfg.run.levels = level;
      row_cfg.run.mode = ModeSelection::kQuantized;
      table << level << ',' << bits_per_scalar(level) << ',';
      try {
        const Prepared prep = prepare(row_cfg);
        const Trajectory t =
            run(prep.problem, prep.mixing, make_run_config(row_cfg, prep, CommMode::kQuantized));
        const double res =
            (t.final().x - prep.reference.x_star).lpNorm<Eigen::Infinity>();
        table << t.final().bits << ',' << format_double(res) << ','
              << t.final().saturations << ",ok\n";
      } catch (const DivergenceError& e) {
        table << ",,,diverged at round " << e.round() << "\n";
      } catch (const SaturationError& e) {
        table << ",,,saturated at step " << e.round() << "\n";
      } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        table << ",,,error: " << msg << "\n";
      }
    }
    auto out = open_out(output_dir(cfg) / "sweep.csv");
    out << table.str();
    log << table.str();
    return 0;
  });
}

int cmd_verify(const ExperimentConfig& cfg, bool sabotage, std::ostream& log) {
  return guarded(log, [&] {
    const Prepared prep = prepare(cfg);
    if (!prep.problem.is_quadratic()) {
      throw DomainError("verify needs a problem with globally valid constants");
    }
    if (!prep.report) {
      throw UntunableError("verify needs a tunable configuration: " + prep.tuning_failure);
    }
    const TuningReport& rep = *prep.report;
    const int n_agents = prep.problem.n_agents();
    std::vector<CheckRow> rows;
    auto add = [&](std::string name, std::string mode, bool ok, std::string detail) {
      rows.push_back({std::move(name), std::move(mode), ok ? "pass" : "FAIL",
                      std::move(detail)});
    };
    auto skip = [&](std::string name, std::string mode, std::string why) {
      rows.push_back({std::move(name), std::move(mode), "skipped", std::move(why)});
    };

    {
      const PowerBoundResult l4 = check_power_bound(rep.H, rep.epsilon, 200);
      add("power_bound", "-", l4.ok, "worst ratio " + format_double(l4.worst_ratio));
    }
    {
      RunConfig rc = make_run_config(cfg, prep, CommMode::kExact);
      rc.max_rounds = 1;
      rc.x0 = prep.reference.x_star;
      rc.chi0 = prep.reference.chi_star.replicate(n_agents, 1);
      rc.y0 = prep.reference.y_star.replicate(n_agents, 1);
      Engine engine(prep.problem, prep.mixing, rc);
      engine.step();
      const double moved =
          (engine.current().x - prep.reference.x_star).lpNorm<Eigen::Infinity>();
      add("fixed_point", "exact", moved <= kFixedPointTol, "moved " + format_double(moved));
    }

    for (CommMode mode : modes_of(cfg.run.mode)) {
      const std::string m = to_string(mode);
      RunConfig rc = make_run_config(cfg, prep, mode);
      if (sabotage && mode == CommMode::kQuantized) {
        const auto receivers = prep.mixing.out_neighbors(0);
        if (!receivers.empty()) rc.fault = FaultInjection{1, 0, receivers.front(), "chi"};
      }
      const Trajectory t = run(prep.problem, prep.mixing, rc);

      double worst_chi = 0.0, worst_y = 0.0;
      for (const auto& s : t.snapshots) {
        const auto [c, y] = conservation_errors(prep.problem, s);
        worst_chi = std::max(worst_chi, c);
        worst_y = std::max(worst_y, y);
      }
      add("conservation_chi", m, worst_chi <= kConservationTol,
          "max error " + format_double(worst_chi));
      add("conservation_y", m, worst_y <= kConservationTol,
          "max error " + format_double(worst_y));

      const ContractionResult l3 = check_contraction(t, rep.H, rep.constants.l2, prep.reference.x_star);
      add("contraction", m, l3.all_ok(),
          std::to_string(l3.violations) + " violations, min slack " +
              format_double(l3.min_slack));

      if (mode == CommMode::kExact) {
        skip("mirror_equality", m, "no quantization in exact mode");
        skip("quantization_error", m, "no quantization in exact mode");
        skip("saturation", m, "no quantization in exact mode");
      } else {
        const std::int64_t live = t.final().mirror_mismatches;
        std::int64_t live_any = 0;
        for (const auto& s : t.snapshots) live_any += s.mirror_mismatches;
        const std::int64_t replay = replay_mismatches(t);
        add("mirror_equality", m, live_any == 0 && replay == 0,
            std::to_string(live_any) + " live mismatches (" + std::to_string(live) +
                " at end), " + std::to_string(replay) + " replay mismatches");
        const std::int64_t qv = quantization_bound_violations(t);
        add("quantization_error", m, qv == 0,
            std::to_string(qv) + " rounds above l(k)/2");
        if (rep.levels_sufficient) {
          add("saturation", m, t.final().saturations == 0,
              std::to_string(t.final().saturations) + " saturations with L >= L_min");
        } else {
          skip("saturation", m, "L below L_min");
        }
      }
      if (rep.levels_sufficient || mode == CommMode::kExact) {
        const auto v = theta_envelope_violation(t, prep.reference.x_star, rep.C0, rep.gamma);
        add("theta_envelope", m, !v,
            v ? "exceeded at round " + std::to_string(*v) : "||Theta(k)|| <= C0 gamma^k");
      } else {
        skip("theta_envelope", m, "L below L_min");
      }
    }

    bool ok = true;
    for (const auto& r : rows) {
      log << r.name << std::string(20 - std::min<std::size_t>(19, r.name.size()), ' ')
          << r.mode << std::string(11 - std::min<std::size_t>(10, r.mode.size()), ' ')
          << r.status << "  " << r.detail << "\n";
      if (r.status == "FAIL") {
        ok = false;
      }
    }
    for (const auto& r : rows) {
      if (r.status == "FAIL") log << "failed invariant: " << r.name << " (" << r.mode << ")\n";
    }
    return ok ? 0 : 1;
  });
}

}  // namespace dqagt
