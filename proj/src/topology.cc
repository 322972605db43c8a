#include "dqagt/topology.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "dqagt/csv.h"
#include "dqagt/errors.h"

namespace dqagt {
namespace {

constexpr double kBuiltinTolerance = 1e-12;
constexpr double kLoadTolerance = 1e-9;
constexpr double kDegenerateMargin = 1e-12;

std::vector<bool> reachable_from_zero(const Eigen::MatrixXd& a,
                                      bool transpose) {
  const int n = static_cast<int>(a.rows());
  std::vector<bool> seen(n, false);
  std::vector<int> stack = {0};
  seen[0] = true;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v) {
      if (v == u || seen[v]) continue;
      // Edge u -> v exists when v listens to u, i.e. a(v, u) > 0.
      double w = transpose ? a(u, v) : a(v, u);
      if (w > 0.0) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace

MixingMatrix MixingMatrix::from_weights(const Eigen::MatrixXd& w,
                                        double tolerance) {
  if (w.rows() == 0 || w.rows() != w.cols()) {
    throw InvalidSizeError("mixing matrix must be square and non-empty");
  }
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw NotDoublyStochasticError(
        "mixing matrix entries must be finite and nonnegative");
  }
  const Eigen::VectorXd rows = w.rowwise().sum();
  const Eigen::VectorXd cols = w.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (std::abs(rows(i) - 1.0) > tolerance ||
        std::abs(cols(i) - 1.0) > tolerance) {
      std::ostringstream msg;
      msg << "mixing matrix is not doubly stochastic: row " << i << " sums to "
          << rows(i) << ", column " << i << " sums to " << cols(i);
      throw NotDoublyStochasticError(msg.str());
    }
  }
  if (!is_strongly_connected(w)) {
    throw ConnectivityError("communication graph is not strongly connected");
  }
  const double kappa = compute_kappa(w);
  if (kappa >= 1.0 - kDegenerateMargin) {
    throw DegenerateSpectrumError(
        "||A - J|| = " + format_double(kappa) + " is not below one");
  }
  return MixingMatrix(w, kappa);
}

std::vector<int> MixingMatrix::in_neighbors(int i) const {
  std::vector<int> out;
  for (int j = 0; j < size(); ++j) {
    if (j != i && weights_(i, j) > 0.0) out.push_back(j);
  }
  return out;
}

std::vector<int> MixingMatrix::out_neighbors(int j) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (i != j && weights_(i, j) > 0.0) out.push_back(i);
  }
  return out;
}

int MixingMatrix::out_degree(int j) const {
  return static_cast<int>(out_neighbors(j).size());
}

MixingMatrix build_complete(int n) {
  if (n < 1) throw InvalidSizeError("complete graph needs n >= 1");
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  return MixingMatrix::from_weights(w, kBuiltinTolerance);
}

MixingMatrix build_ring(int n, double self_weight) {
  if (n < 3) throw InvalidSizeError("ring needs n >= 3");
  if (!(self_weight > 0.0 && self_weight < 1.0)) {
    throw ParameterError("ring self_weight must lie in (0, 1)");
  }
  const double side = (1.0 - self_weight) / 2.0;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    w(i, i) = self_weight;
    w(i, (i + 1) % n) += side;
    w(i, (i + n - 1) % n) += side;
  }
  return MixingMatrix::from_weights(w, kBuiltinTolerance);
}

MixingMatrix load_matrix(const Eigen::MatrixXd& entries) {
  return MixingMatrix::from_weights(entries, kLoadTolerance);
}

double compute_kappa(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd deflated =
      a - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(deflated);
  return svd.singularValues()(0);
}

bool is_strongly_connected(const Eigen::MatrixXd& a) {
  if (a.rows() == 0) return false;
  for (bool transpose : {false, true}) {
    for (bool seen : reachable_from_zero(a, transpose)) {
      if (!seen) return false;
    }
  }
  return true;
}

MixingMatrix read_matrix(std::istream& in) {
  std::string line;
  auto next_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      if (!trim(line).empty()) return line;
    }
    throw ConfigError("matrix file ended early");
  };
  const long long n = parse_int(next_line());
  if (n < 1) throw InvalidSizeError("matrix size must be positive");
  Eigen::MatrixXd w(n, n);
  for (long long i = 0; i < n; ++i) {
    std::string row = next_line();
    std::vector<double> values;
    for (const auto& tok : split(trim(row), ' ')) {
      if (!trim(tok).empty()) values.push_back(parse_double(tok));
    }
    if (static_cast<long long>(values.size()) != n) {
      throw ShapeError("matrix row " + std::to_string(i) + " has " +
                       std::to_string(values.size()) + " entries, expected " +
                       std::to_string(n));
    }
    for (long long j = 0; j < n; ++j) w(i, j) = values[j];
  }
  return load_matrix(w);
}

MixingMatrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file " + path.string());
  return read_matrix(in);
}

void write_matrix(std::ostream& out, const MixingMatrix& m) {
  out << m.size() << "\n";
  for (int i = 0; i < m.size(); ++i) {
    for (int j = 0; j < m.size(); ++j) {
      if (j) out << ' ';
      out << format_double(m.weight(i, j));
    }
    out << "\n";
  }
}

}  // namespace dqagt
