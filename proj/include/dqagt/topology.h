#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

namespace dqagt {

// Doubly stochastic weight matrix A over a strongly connected digraph.
// Entry (i, j) is the weight agent i puts on the value received from j;
// diagonal entries are self-weights. Instances only exist in validated form.
class MixingMatrix {
 public:
  // Validates `weights` and computes kappa. Row and column sums must be one
  // within `tolerance`.
  static MixingMatrix from_weights(const Eigen::MatrixXd& weights,
                                   double tolerance);

  int size() const { return static_cast<int>(weights_.rows()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  double weight(int i, int j) const { return weights_(i, j); }

  // ||A - (1/N) 1 1^T||_2, strictly below one.
  double kappa() const { return kappa_; }

  // Agents j != i with a_ij > 0, ascending.
  std::vector<int> in_neighbors(int i) const;
  // Agents i != j with a_ij > 0, i.e. receivers of j's broadcast.
  std::vector<int> out_neighbors(int j) const;
  int out_degree(int j) const;

 private:
  MixingMatrix(Eigen::MatrixXd weights, double kappa)
      : weights_(std::move(weights)), kappa_(kappa) {}

  Eigen::MatrixXd weights_;
  double kappa_;
};

MixingMatrix build_complete(int n);

// Symmetric circulant ring: self_weight on the diagonal and
// (1 - self_weight) / 2 on each ring neighbour.
MixingMatrix build_ring(int n, double self_weight);

// Validates a user-supplied matrix (row/column sums within 1e-9).
MixingMatrix load_matrix(const Eigen::MatrixXd& entries);

// Largest singular value of A - (1/N) 1 1^T.
double compute_kappa(const Eigen::MatrixXd& a);

// Strong connectivity of the digraph of positive off-diagonal entries.
bool is_strongly_connected(const Eigen::MatrixXd& a);

// Text format: first line N, then N lines of N weights.
MixingMatrix read_matrix(std::istream& in);
MixingMatrix read_matrix_file(const std::filesystem::path& path);
void write_matrix(std::ostream& out, const MixingMatrix& m);

}  // namespace dqagt
