#include "dqagt/engine.h"

#include <chrono>
#include <ostream>
#include <utility>

#include "dqagt/csv.h"
#include "dqagt/errors.h"

namespace dqagt {
namespace {

using Eigen::VectorXd;

bool all_finite(const Snapshot& s) {
  return s.x.allFinite() && s.chi.allFinite() && s.y.allFinite();
}

}  // namespace

std::string to_string(CommMode mode) {
  return mode == CommMode::kExact ? "exact" : "quantized";
}

VectorXd block_mean(const VectorXd& stacked, int blocks) {
  const Eigen::Index dim = stacked.size() / blocks;
  VectorXd mean = VectorXd::Zero(dim);
  for (int i = 0; i < blocks; ++i) mean += stacked.segment(i * dim, dim);
  return mean / blocks;
}

double consensus_error(const VectorXd& stacked, int blocks) {
  const Eigen::Index dim = stacked.size() / blocks;
  const VectorXd mean = block_mean(stacked, blocks);
  double sq = 0.0;
  for (int i = 0; i < blocks; ++i) {
    sq += (stacked.segment(i * dim, dim) - mean).squaredNorm();
  }
  return std::sqrt(sq);
}

Engine::Engine(const AggregativeProblem& problem, const MixingMatrix& mixing,
               RunConfig config)
    : problem_(problem),
      mixing_(mixing),
      config_(std::move(config)),
      n_agents_(problem.n_agents()),
      n_(problem.dim_x()),
      r_(problem.dim_agg()) {
  if (mixing_.size() != n_agents_) {
    throw ShapeError("mixing matrix has " + std::to_string(mixing_.size()) +
                     " agents, problem has " + std::to_string(n_agents_));
  }
  if (config_.x0.size() != static_cast<Eigen::Index>(n_agents_) * n_) {
    throw ShapeError("x0 has length " + std::to_string(config_.x0.size()) +
                     ", expected " + std::to_string(n_agents_ * n_));
  }
  if (!(config_.alpha > 0.0) || !std::isfinite(config_.alpha)) {
    throw ParameterError("step size alpha must be positive");
  }
  if (config_.max_rounds < 1) throw ParameterError("max_rounds must be >= 1");
  const Eigen::Index nr = static_cast<Eigen::Index>(n_agents_) * r_;
  for (const auto* v : {&config_.chi0, &config_.y0}) {
    if (*v && (*v)->size() != nr) throw ShapeError("tracker override has wrong length");
  }

  current_.round = 0;
  current_.x = config_.x0;
  current_.chi.resize(nr);
  current_.y.resize(nr);
  for (int i = 0; i < n_agents_; ++i) {
    VectorXd xi = current_.x.segment(i * n_, n_);
    VectorXd chi_i = config_.chi0 ? VectorXd(config_.chi0->segment(i * r_, r_))
                                  : problem_.agent(i).aggregate(xi);
    current_.chi.segment(i * r_, r_) = chi_i;
    current_.y.segment(i * r_, r_) =
        config_.y0 ? VectorXd(config_.y0->segment(i * r_, r_))
                   : problem_.agent(i).grad_chi(xi, chi_i);
  }
  if (!all_finite(current_)) throw DivergenceError(0, "initial state is not finite");

  if (config_.mode == CommMode::kQuantized) {
    const UniformQuantizer q(config_.levels);
    const ScalingSchedule s(config_.l0, config_.gamma);
    const bool strict = config_.strict_saturation;
    for (int i = 0; i < n_agents_; ++i) {
      chi_enc_.emplace_back(q, s, r_, strict);
      y_enc_.emplace_back(q, s, r_, strict);
    }
    links_.resize(n_agents_);
    for (int i = 0; i < n_agents_; ++i) {
      for (int j : mixing_.in_neighbors(i)) {
        links_[i].push_back(Link{j, ChannelCodec(q, s, r_), ChannelCodec(q, s, r_)});
      }
    }
  }
  current_.chi_hat.resize(nr);
  current_.y_hat.resize(nr);
  broadcast(current_.chi, current_.y);
}

void Engine::broadcast(const VectorXd& chi, const VectorXd& y) {
  const std::int64_t k = current_.round;
  if (config_.mode == CommMode::kExact) {
    current_.chi_hat = chi;
    current_.y_hat = y;
    refresh_metrics();
    return;
  }
  CodeFrame frame;
  frame.round = k;
  try {
    for (int i = 0; i < n_agents_; ++i) {
      frame.chi.push_back(chi_enc_[i].encode(chi.segment(i * r_, r_)));
      frame.y.push_back(y_enc_[i].encode(y.segment(i * r_, r_)));
      current_.chi_hat.segment(i * r_, r_) = chi_enc_[i].recon();
      current_.y_hat.segment(i * r_, r_) = y_enc_[i].recon();
    }
  } catch (const InvalidValueError& e) {
    throw DivergenceError(k, "quantizer input overflowed at round " +
                                 std::to_string(k) + ": " + e.what());
  }
  for (int i = 0; i < n_agents_; ++i) {
    for (auto& link : links_[i]) {
      Code chi_code = frame.chi[link.sender];
      Code y_code = frame.y[link.sender];
      const auto& f = config_.fault;
      if (f && f->round == k && f->sender == link.sender && f->receiver == i) {
        Code& c = f->stream == "y" ? y_code : chi_code;
        c[0] += c[0] < config_.levels ? 1 : -1;
      }
      link.chi.decode(chi_code);
      link.y.decode(y_code);
    }
  }
  frames_.push_back(std::move(frame));
  refresh_metrics();
}

void Engine::refresh_metrics() {
  current_.consensus_chi = consensus_error(current_.chi, n_agents_);
  current_.consensus_y = consensus_error(current_.y, n_agents_);
  if (config_.mode == CommMode::kExact) return;
  std::int64_t bits = 0, nonzero = 0, edges = 0, sat = 0, mismatches = 0;
  for (int j = 0; j < n_agents_; ++j) {
    const std::int64_t b = chi_enc_[j].bits_sent() + y_enc_[j].bits_sent();
    bits += b;
    nonzero += chi_enc_[j].bits_sent_nonzero() + y_enc_[j].bits_sent_nonzero();
    edges += b * mixing_.out_degree(j);
    sat += chi_enc_[j].saturation_count() + y_enc_[j].saturation_count();
  }
  for (int i = 0; i < n_agents_; ++i) {
    for (const auto& link : links_[i]) {
      if (link.chi.recon() != chi_enc_[link.sender].recon() ||
          link.y.recon() != y_enc_[link.sender].recon()) {
        ++mismatches;
      }
    }
  }
  current_.bits = bits;
  current_.bits_nonzero = nonzero;
  current_.bits_edges = edges;
  current_.saturations = sat;
  current_.mirror_mismatches = mismatches;
}

VectorXd Engine::received(int receiver, int sender, bool chi_stream) const {
  if (config_.mode == CommMode::kExact || receiver == sender) {
    const VectorXd& hat = chi_stream ? current_.chi_hat : current_.y_hat;
    return hat.segment(sender * r_, r_);
  }
  for (const auto& link : links_[receiver]) {
    if (link.sender == sender) return chi_stream ? link.chi.recon() : link.y.recon();
  }
  throw ProtocolError("agent " + std::to_string(receiver) +
                      " has no channel from " + std::to_string(sender));
}

void Engine::step() {
  const Snapshot& s = current_;
  const double alpha = config_.alpha;
  VectorXd x_new(s.x.size()), chi_new(s.chi.size()), y_new(s.y.size());

  for (int i = 0; i < n_agents_; ++i) {
    const LocalCost& f = problem_.agent(i);
    VectorXd xi = s.x.segment(i * n_, n_);
    VectorXd chi_i = s.chi.segment(i * r_, r_);
    VectorXd yi = s.y.segment(i * r_, r_);
    x_new.segment(i * n_, n_) =
        xi - alpha * (f.grad_x(xi, chi_i) + f.aggregate_jacobian(xi) * yi);
  }
  for (int i = 0; i < n_agents_; ++i) {
    const LocalCost& f = problem_.agent(i);
    VectorXd xi = s.x.segment(i * n_, n_);
    VectorXd xi_new = x_new.segment(i * n_, n_);
    VectorXd chi_i = s.chi.segment(i * r_, r_);
    VectorXd mix = VectorXd::Zero(r_);
    for (int j = 0; j < n_agents_; ++j) {
      const double a = mixing_.weight(i, j);
      if (a > 0.0) mix += a * received(i, j, true);
    }
    chi_new.segment(i * r_, r_) = mix + f.aggregate(xi_new) - f.aggregate(xi) +
                                  chi_i - s.chi_hat.segment(i * r_, r_);
  }
  for (int i = 0; i < n_agents_; ++i) {
    const LocalCost& f = problem_.agent(i);
    VectorXd xi = s.x.segment(i * n_, n_);
    VectorXd xi_new = x_new.segment(i * n_, n_);
    VectorXd chi_i = s.chi.segment(i * r_, r_);
    VectorXd chi_i_new = chi_new.segment(i * r_, r_);
    VectorXd mix = VectorXd::Zero(r_);
    for (int j = 0; j < n_agents_; ++j) {
      const double a = mixing_.weight(i, j);
      if (a > 0.0) mix += a * received(i, j, false);
    }
    y_new.segment(i * r_, r_) = mix + f.grad_chi(xi_new, chi_i_new) -
                                f.grad_chi(xi, chi_i) + s.y.segment(i * r_, r_) -
                                s.y_hat.segment(i * r_, r_);
  }

  current_.round += 1;
  current_.x = std::move(x_new);
  current_.chi = std::move(chi_new);
  current_.y = std::move(y_new);
  if (!all_finite(current_)) {
    throw DivergenceError(current_.round, "state became non-finite at round " +
                                              std::to_string(current_.round));
  }
  broadcast(current_.chi, current_.y);
}

Trajectory run(const AggregativeProblem& problem, const MixingMatrix& mixing,
               const RunConfig& config, Trajectory* partial) {
  const auto start = std::chrono::steady_clock::now();
  Engine engine(problem, mixing, config);
  Trajectory t;
  t.mode = config.mode;
  t.n_agents = problem.n_agents();
  t.dim_x = problem.dim_x();
  t.dim_agg = problem.dim_agg();
  t.levels = config.levels;
  t.l0 = config.l0;
  t.gamma = config.gamma;
  t.snapshots.reserve(config.max_rounds + 1);
  t.snapshots.push_back(engine.current());
  for (std::int64_t k = 0; k < config.max_rounds; ++k) {
    try {
      engine.step();
    } catch (const DivergenceError&) {
      if (partial) {
        t.frames = engine.frames();
        *partial = std::move(t);
      }
      throw;
    }
    t.snapshots.push_back(engine.current());
    if (config.stop_tol > 0.0) {
      const auto& a = t.snapshots[t.snapshots.size() - 2].x;
      const auto& b = t.snapshots.back().x;
      if ((b - a).lpNorm<Eigen::Infinity>() < config.stop_tol) break;
    }
  }
  t.frames = engine.frames();
  t.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& t,
                          const std::vector<double>& residuals) {
  out << "round";
  for (int i = 0; i < t.n_agents; ++i) {
    for (int k = 0; k < t.dim_x; ++k) out << ",x_" << i << '_' << k;
    for (int k = 0; k < t.dim_agg; ++k) out << ",chi_" << i << '_' << k;
    for (int k = 0; k < t.dim_agg; ++k) out << ",y_" << i << '_' << k;
  }
  out << ",residual_x,bits_cum,saturations_cum\n";
  for (std::size_t row = 0; row < t.snapshots.size(); ++row) {
    const Snapshot& s = t.snapshots[row];
    out << s.round;
    for (int i = 0; i < t.n_agents; ++i) {
      for (int k = 0; k < t.dim_x; ++k) out << ',' << format_double(s.x(i * t.dim_x + k));
      for (int k = 0; k < t.dim_agg; ++k) out << ',' << format_double(s.chi(i * t.dim_agg + k));
      for (int k = 0; k < t.dim_agg; ++k) out << ',' << format_double(s.y(i * t.dim_agg + k));
    }
    out << ',';
    if (row < residuals.size()) out << format_double(residuals[row]);
    out << ',' << s.bits << ',' << s.saturations << "\n";
  }
}

std::vector<CodeRecord> code_records(const Trajectory& t) {
  std::vector<CodeRecord> out;
  for (const auto& f : t.frames) {
    for (int i = 0; i < static_cast<int>(f.chi.size()); ++i) {
      out.push_back({f.round, i, "chi", f.chi[i]});
      out.push_back({f.round, i, "y", f.y[i]});
    }
  }
  return out;
}

}  // namespace dqagt
