#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqagt/codec.h"
#include "dqagt/problems.h"
#include "dqagt/topology.h"

namespace dqagt {

enum class CommMode { kQuantized, kExact };

std::string to_string(CommMode mode);

// Negative control: perturbs the code `sender` delivers to `receiver` on
// the given stream at `round` by one level (toward zero when at +-L).
struct FaultInjection {
  std::int64_t round = 1;
  int sender = 0;
  int receiver = 1;
  std::string stream = "chi";
};

struct RunConfig {
  double alpha = 0.01;
  double l0 = 1.0;
  double gamma = 0.5;
  std::int64_t levels = 10;
  std::int64_t max_rounds = 100;
  CommMode mode = CommMode::kQuantized;
  Eigen::VectorXd x0;
  bool strict_saturation = false;
  // Stop once ||x(k) - x(k-1)||_inf < stop_tol. Zero runs every round.
  double stop_tol = 0.0;
  std::optional<FaultInjection> fault;
  // Override the initial trackers (stacked, N*r). Used to start at a known
  // fixed point; normal runs derive them from x0.
  std::optional<Eigen::VectorXd> chi0;
  std::optional<Eigen::VectorXd> y0;
};

// State of the whole network after round k. Stacked vectors put agent i's
// block first-to-last; chi_hat and y_hat are the senders' mirrors.
struct Snapshot {
  std::int64_t round = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd chi;
  Eigen::VectorXd y;
  Eigen::VectorXd chi_hat;
  Eigen::VectorXd y_hat;
  std::int64_t bits = 0;          // cumulative, one broadcast per stream
  std::int64_t bits_nonzero = 0;  // cumulative, zero codes free
  std::int64_t bits_edges = 0;    // cumulative, per delivered copy
  std::int64_t saturations = 0;   // cumulative
  // Receivers whose reconstruction differs from the sender's mirror.
  std::int64_t mirror_mismatches = 0;
  double consensus_chi = 0.0;
  double consensus_y = 0.0;
};

// Codes broadcast in one round; chi[i] and y[i] come from agent i.
struct CodeFrame {
  std::int64_t round = 0;
  std::vector<Code> chi;
  std::vector<Code> y;
};

struct Trajectory {
  CommMode mode = CommMode::kQuantized;
  int n_agents = 0;
  int dim_x = 0;
  int dim_agg = 0;
  std::int64_t levels = 0;
  double l0 = 0.0;
  double gamma = 0.0;
  std::vector<Snapshot> snapshots;  // rounds 0..K
  std::vector<CodeFrame> frames;    // empty in exact mode
  double wall_seconds = 0.0;

  std::int64_t rounds_run() const {
    return static_cast<std::int64_t>(snapshots.size()) - 1;
  }
  const Snapshot& final() const { return snapshots.back(); }
};

// ||v - 1 (x) mean||_2 for a stacked vector of `blocks` blocks.
double consensus_error(const Eigen::VectorXd& stacked, int blocks);

// Mean of the blocks of a stacked vector.
Eigen::VectorXd block_mean(const Eigen::VectorXd& stacked, int blocks);

class Engine {
 public:
  Engine(const AggregativeProblem& problem, const MixingMatrix& mixing,
         RunConfig config);

  const Snapshot& current() const { return current_; }
  // Advances one round. Throws DivergenceError on non-finite state and
  // SaturationError in strict mode.
  void step();

  const std::vector<CodeFrame>& frames() const { return frames_; }

 private:
  struct Link {
    int sender;
    ChannelCodec chi;
    ChannelCodec y;
  };

  void broadcast(const Eigen::VectorXd& chi, const Eigen::VectorXd& y);
  void refresh_metrics();
  Eigen::VectorXd received(int receiver, int sender, bool chi_stream) const;

  const AggregativeProblem& problem_;
  const MixingMatrix& mixing_;
  RunConfig config_;
  int n_agents_, n_, r_;
  std::vector<ChannelCodec> chi_enc_, y_enc_;
  std::vector<std::vector<Link>> links_;  // per receiver, by in-neighbor
  Snapshot current_;
  std::vector<CodeFrame> frames_;
};

// Runs until max_rounds or the stop tolerance. On DivergenceError the rounds
// completed so far are moved into `partial` (if given) before rethrowing.
Trajectory run(const AggregativeProblem& problem, const MixingMatrix& mixing,
               const RunConfig& config, Trajectory* partial = nullptr);

// round, x_i/chi_i/y_i components per agent, residual_x, bits_cum,
// saturations_cum. `residuals` may be empty, leaving that column blank.
void write_trajectory_csv(std::ostream& out, const Trajectory& t,
                          const std::vector<double>& residuals);

// Code stream records (round order, then agent, chi before y).
std::vector<CodeRecord> code_records(const Trajectory& t);

}  // namespace dqagt
