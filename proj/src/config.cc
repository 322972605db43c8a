#include "dqagt/config.h"

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dqagt/csv.h"
#include "dqagt/errors.h"

namespace dqagt {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"problem",
     {"kind", "targets", "gammas", "reference_x", "n_agents", "reg", "dim_x",
      "dim_agg", "seed", "coupling"}},
    {"constants", {"mu", "l1", "l2", "l3"}},
    {"graph", {"kind", "self_weight", "path"}},
    {"run",
     {"alpha", "alpha_fraction", "gamma", "gamma_margin", "l0", "L", "rounds",
      "mode", "x0", "x0_seed", "x0_low", "x0_high", "strict_saturation",
      "stop_tol", "gamma_J"}},
    {"output", {"directory", "write_trajectory"}},
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) {
    if (trim(tok).empty()) continue;
    out.push_back(parse_double(tok));
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string join(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) out += ", ";
    out += format_double(v(k));
  }
  return out;
}

bool parse_bool(const std::string& text) {
  const std::string_view t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(t) + "'");
}

bool is_auto(const std::string& text) { return trim(text) == "auto"; }

class Section {
 public:
  Section(const pt::ptree& tree, const std::string& name) : name_(name) {
    if (auto child = tree.get_child_optional(name)) node_ = &*child;
  }
  std::optional<std::string> get(const std::string& key) const {
    if (!node_) return std::nullopt;
    auto v = node_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return std::string(trim(*v));
  }
  template <class F>
  void read(const std::string& key, F&& apply) const {
    if (auto v = get(key)) {
      try {
        apply(*v);
      } catch (const ConfigError& e) {
        throw ConfigError("[" + name_ + "] " + key + ": " + e.what());
      }
    }
  }

 private:
  std::string name_;
  const pt::ptree* node_ = nullptr;
};

ModeSelection parse_mode(const std::string& s) {
  if (s == "quantized") return ModeSelection::kQuantized;
  if (s == "exact") return ModeSelection::kExact;
  if (s == "both") return ModeSelection::kBoth;
  throw ConfigError("mode must be quantized, exact or both");
}

int positive_int(const std::string& s) {
  const long long v = parse_int(s);
  if (v < 1 || v > 1'000'000) throw ConfigError("expected a positive integer");
  return static_cast<int>(v);
}

bool same(const std::optional<Eigen::VectorXd>& a,
          const std::optional<Eigen::VectorXd>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || (a->size() == b->size() && *a == *b);
}

}  // namespace

std::string to_string(ModeSelection mode) {
  switch (mode) {
    case ModeSelection::kQuantized: return "quantized";
    case ModeSelection::kExact: return "exact";
    case ModeSelection::kBoth: return "both";
  }
  return "quantized";
}

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [section, node] : tree) {
    auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end()) {
      throw ConfigError("unknown config section [" + section + "]");
    }
    if (!node.data().empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, unused] : node) {
      if (!known->second.count(key)) {
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  ExperimentConfig cfg;
  const Section problem(tree, "problem");
  problem.read("kind", [&](const std::string& s) {
    if (s == "custom-file") {
      throw ConfigError("custom problems cannot be loaded from a file");
    }
    if (s != "placement" && s != "bandwidth" && s != "quadratic") {
      throw ConfigError("unknown problem kind '" + s + "'");
    }
    cfg.problem.kind = s;
  });
  problem.read("targets", [&](const std::string& s) {
    for (const auto& point : split(s, ';')) {
      if (trim(point).empty()) continue;
      auto xy = parse_list(point);
      if (xy.size() != 2) throw ConfigError("each target needs two coordinates");
      cfg.problem.targets.emplace_back(xy[0], xy[1]);
    }
  });
  problem.read("gammas", [&](const std::string& s) { cfg.problem.gammas = parse_list(s); });
  problem.read("reference_x", [&](const std::string& s) {
    cfg.problem.reference_x = to_vector(parse_list(s));
  });
  problem.read("n_agents", [&](const std::string& s) { cfg.problem.n_agents = positive_int(s); });
  problem.read("reg", [&](const std::string& s) { cfg.problem.reg = parse_double(s); });
  problem.read("dim_x", [&](const std::string& s) { cfg.problem.dim_x = positive_int(s); });
  problem.read("dim_agg", [&](const std::string& s) { cfg.problem.dim_agg = positive_int(s); });
  problem.read("seed", [&](const std::string& s) {
    cfg.problem.seed = static_cast<std::uint64_t>(parse_int(s));
  });
  problem.read("coupling", [&](const std::string& s) { cfg.problem.coupling = parse_double(s); });

  const Section constants(tree, "constants");
  constants.read("mu", [&](const std::string& s) { cfg.constants.mu = parse_double(s); });
  constants.read("l1", [&](const std::string& s) { cfg.constants.l1 = parse_double(s); });
  constants.read("l2", [&](const std::string& s) { cfg.constants.l2 = parse_double(s); });
  constants.read("l3", [&](const std::string& s) { cfg.constants.l3 = parse_double(s); });

  const Section graph(tree, "graph");
  graph.read("kind", [&](const std::string& s) {
    if (s != "complete" && s != "ring" && s != "file") {
      throw ConfigError("graph kind must be complete, ring or file");
    }
    cfg.graph.kind = s;
  });
  graph.read("self_weight", [&](const std::string& s) { cfg.graph.self_weight = parse_double(s); });
  graph.read("path", [&](const std::string& s) { cfg.graph.path = s; });

  const Section run(tree, "run");
  RunSpec& r = cfg.run;
  run.read("alpha", [&](const std::string& s) {
    if (is_auto(s)) r.alpha.reset(); else r.alpha = parse_double(s);
  });
  run.read("alpha_fraction", [&](const std::string& s) { r.alpha_fraction = parse_double(s); });
  run.read("gamma", [&](const std::string& s) {
    if (is_auto(s)) r.gamma.reset(); else r.gamma = parse_double(s);
  });
  run.read("gamma_margin", [&](const std::string& s) { r.gamma_margin = parse_double(s); });
  run.read("l0", [&](const std::string& s) { r.l0 = parse_double(s); });
  run.read("L", [&](const std::string& s) {
    if (is_auto(s)) {
      r.levels.reset();
    } else {
      r.levels = parse_int(s);
      if (*r.levels < 1) throw ConfigError("L must be >= 1");
    }
  });
  run.read("rounds", [&](const std::string& s) {
    r.rounds = parse_int(s);
    if (r.rounds < 1) throw ConfigError("rounds must be >= 1");
  });
  run.read("mode", [&](const std::string& s) { r.mode = parse_mode(s); });
  run.read("x0", [&](const std::string& s) { r.x0 = to_vector(parse_list(s)); });
  run.read("x0_seed", [&](const std::string& s) {
    r.x0_seed = static_cast<std::uint64_t>(parse_int(s));
  });
  run.read("x0_low", [&](const std::string& s) { r.x0_low = parse_double(s); });
  run.read("x0_high", [&](const std::string& s) { r.x0_high = parse_double(s); });
  run.read("strict_saturation", [&](const std::string& s) { r.strict_saturation = parse_bool(s); });
  run.read("stop_tol", [&](const std::string& s) { r.stop_tol = parse_double(s); });
  run.read("gamma_J", [&](const std::string& s) { r.gamma_J = parse_double(s); });
  if (!(r.x0_low <= r.x0_high)) throw ConfigError("[run] x0_low must not exceed x0_high");

  const Section output(tree, "output");
  output.read("directory", [&](const std::string& s) { cfg.output.directory = s; });
  output.read("write_trajectory", [&](const std::string& s) {
    cfg.output.write_trajectory = parse_bool(s);
  });
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  const ProblemSpec& p = cfg.problem;
  out << "[problem]\nkind = " << p.kind << "\n";
  if (!p.targets.empty()) {
    out << "targets = ";
    for (std::size_t i = 0; i < p.targets.size(); ++i) {
      if (i) out << "; ";
      out << format_double(p.targets[i].x()) << ", " << format_double(p.targets[i].y());
    }
    out << "\n";
  }
  if (!p.gammas.empty()) {
    out << "gammas = " << join(to_vector(p.gammas)) << "\n";
  }
  if (p.reference_x) out << "reference_x = " << join(*p.reference_x) << "\n";
  out << "n_agents = " << p.n_agents << "\nreg = " << format_double(p.reg)
      << "\ndim_x = " << p.dim_x << "\ndim_agg = " << p.dim_agg
      << "\nseed = " << p.seed << "\ncoupling = " << format_double(p.coupling) << "\n";

  const ConstantsOverride& c = cfg.constants;
  if (c.mu || c.l1 || c.l2 || c.l3) {
    out << "\n[constants]\n";
    if (c.mu) out << "mu = " << format_double(*c.mu) << "\n";
    if (c.l1) out << "l1 = " << format_double(*c.l1) << "\n";
    if (c.l2) out << "l2 = " << format_double(*c.l2) << "\n";
    if (c.l3) out << "l3 = " << format_double(*c.l3) << "\n";
  }

  out << "\n[graph]\nkind = " << cfg.graph.kind
      << "\nself_weight = " << format_double(cfg.graph.self_weight) << "\n";
  if (!cfg.graph.path.empty()) out << "path = " << cfg.graph.path << "\n";

  const RunSpec& r = cfg.run;
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("auto");
  };
  out << "\n[run]\nalpha = " << opt(r.alpha)
      << "\nalpha_fraction = " << format_double(r.alpha_fraction)
      << "\ngamma = " << opt(r.gamma)
      << "\ngamma_margin = " << format_double(r.gamma_margin)
      << "\nl0 = " << format_double(r.l0)
      << "\nL = " << (r.levels ? std::to_string(*r.levels) : std::string("auto"))
      << "\nrounds = " << r.rounds << "\nmode = " << to_string(r.mode) << "\n";
  if (r.x0) out << "x0 = " << join(*r.x0) << "\n";
  out << "x0_seed = " << r.x0_seed << "\nx0_low = " << format_double(r.x0_low)
      << "\nx0_high = " << format_double(r.x0_high)
      << "\nstrict_saturation = " << (r.strict_saturation ? "true" : "false")
      << "\nstop_tol = " << format_double(r.stop_tol)
      << "\ngamma_J = " << format_double(r.gamma_J) << "\n";

  out << "\n[output]\ndirectory = " << cfg.output.directory
      << "\nwrite_trajectory = " << (cfg.output.write_trajectory ? "true" : "false")
      << "\n";
}

bool same_settings(const ExperimentConfig& a, const ExperimentConfig& b) {
  const ProblemSpec &p = a.problem, &q = b.problem;
  if (p.kind != q.kind || p.targets != q.targets || p.gammas != q.gammas ||
      !same(p.reference_x, q.reference_x) || p.n_agents != q.n_agents ||
      p.reg != q.reg || p.dim_x != q.dim_x || p.dim_agg != q.dim_agg ||
      p.seed != q.seed || p.coupling != q.coupling) {
    return false;
  }
  const ConstantsOverride &c = a.constants, &d = b.constants;
  if (c.mu != d.mu || c.l1 != d.l1 || c.l2 != d.l2 || c.l3 != d.l3) return false;
  if (a.graph.kind != b.graph.kind || a.graph.self_weight != b.graph.self_weight ||
      a.graph.path != b.graph.path) {
    return false;
  }
  const RunSpec &r = a.run, &s = b.run;
  return r.alpha == s.alpha && r.alpha_fraction == s.alpha_fraction &&
         r.gamma == s.gamma && r.gamma_margin == s.gamma_margin && r.l0 == s.l0 &&
         r.levels == s.levels && r.rounds == s.rounds && r.mode == s.mode &&
         same(r.x0, s.x0) && r.x0_seed == s.x0_seed && r.x0_low == s.x0_low &&
         r.x0_high == s.x0_high && r.strict_saturation == s.strict_saturation &&
         r.stop_tol == s.stop_tol && r.gamma_J == s.gamma_J &&
         a.output.directory == b.output.directory &&
         a.output.write_trajectory == b.output.write_trajectory;
}

AggregativeProblem build_problem(const ExperimentConfig& cfg) {
  const ProblemSpec& p = cfg.problem;
  std::optional<AggregativeProblem> prob;
  if (p.kind == "placement") {
    if (p.targets.empty()) throw ConfigError("placement needs [problem] targets");
    std::vector<double> gammas = p.gammas;
    if (gammas.size() == 1) gammas.assign(p.targets.size(), gammas[0]);
    prob = make_placement(p.targets, gammas);
  } else if (p.kind == "bandwidth") {
    prob = make_bandwidth_sharing(p.n_agents, p.reg);
  } else if (p.kind == "quadratic") {
    prob = make_quadratic_synthetic(p.n_agents, p.dim_x, p.dim_agg, p.seed, p.coupling);
  } else {
    throw ConfigError("unknown problem kind '" + p.kind + "'");
  }
  RegularityConstants c = prob->constants();
  const ConstantsOverride& o = cfg.constants;
  if (o.mu) c.mu = *o.mu;
  if (o.l1) c.l1 = *o.l1;
  if (o.l2) c.l2 = *o.l2;
  if (o.l3) c.l3 = *o.l3;
  return prob->with_constants(c);
}

MixingMatrix build_graph(const ExperimentConfig& cfg, int n_agents) {
  if (cfg.graph.kind == "complete") return build_complete(n_agents);
  if (cfg.graph.kind == "ring") return build_ring(n_agents, cfg.graph.self_weight);
  if (cfg.graph.path.empty()) throw ConfigError("graph kind 'file' needs [graph] path");
  MixingMatrix m = read_matrix_file(cfg.graph.path);
  if (m.size() != n_agents) {
    throw ShapeError("graph file has " + std::to_string(m.size()) +
                     " agents, problem has " + std::to_string(n_agents));
  }
  return m;
}

Eigen::VectorXd initial_point(const ExperimentConfig& cfg,
                              const AggregativeProblem& p) {
  const Eigen::Index dim = static_cast<Eigen::Index>(p.n_agents()) * p.dim_x();
  if (cfg.run.x0) {
    if (cfg.run.x0->size() != dim) {
      throw ShapeError("[run] x0 has " + std::to_string(cfg.run.x0->size()) +
                       " entries, expected " + std::to_string(dim));
    }
    return *cfg.run.x0;
  }
  UniformSource rng(cfg.run.x0_seed);
  Eigen::VectorXd x(dim);
  for (Eigen::Index k = 0; k < dim; ++k) x(k) = rng.next(cfg.run.x0_low, cfg.run.x0_high);
  return x;
}

}  // namespace dqagt
