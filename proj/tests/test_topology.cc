#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "dqagt/errors.h"
#include "dqagt/topology.h"

using namespace dqagt;
using Eigen::MatrixXd;

namespace {

// Circulant eigenvalues of the symmetric ring: s + (1 - s) cos(2 pi j / n).
double ring_kappa_oracle(int n, double s) {
  double k = 0.0;
  for (int j = 1; j < n; ++j) {
    k = std::max(k, std::abs(s + (1 - s) * std::cos(2 * std::numbers::pi * j / n)));
  }
  return k;
}

// Symmetric doubly stochastic: Metropolis weights on a random connected graph.
MatrixXd metropolis(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  MatrixXd adj = MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    int j = static_cast<int>(u(rng) * i);
    adj(i, j) = adj(j, i) = 1;
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (u(rng) < 0.3) adj(i, j) = adj(j, i) = 1;
  Eigen::VectorXd deg = adj.rowwise().sum();
  MatrixXd w = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (adj(i, j) > 0) w(i, j) = 1.0 / (1.0 + std::max(deg(i), deg(j)));
    }
    w(i, i) = 1.0 - w.row(i).sum();
  }
  return w;
}

// Non-symmetric doubly stochastic: convex mix of identity and a cyclic shift.
MatrixXd cyclic_mix(int n, double a) {
  MatrixXd w = a * MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) w(i, (i + 1) % n) += 1 - a;
  return w;
}

}  // namespace

TEST_CASE("complete graph") {
  for (int n : {1, 3, 5}) {
    MixingMatrix m = build_complete(n);
    CHECK(m.size() == n);
    CHECK(std::abs(m.kappa()) <= 1e-15);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(m.weight(i, j) == doctest::Approx(1.0 / n));
  }
  CHECK_THROWS_AS(build_complete(0), InvalidSizeError);
}

TEST_CASE("ring kappa matches circulant eigenvalues") {
  MixingMatrix r4 = build_ring(4, 0.5);
  CHECK(r4.kappa() == doctest::Approx(0.5).epsilon(1e-12));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(r4.weights());
  Eigen::VectorXd ev = es.eigenvalues();
  CHECK(ev(0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  CHECK(ev(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ev(2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ev(3) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(build_ring(3, 1.0 / 3).kappa() < 1e-12);
  CHECK(build_ring(6, 0.2).kappa() == doctest::Approx(0.6).epsilon(1e-12));
  for (int n = 3; n <= 9; ++n) {
    for (double s : {0.1, 0.4, 0.8}) {
      CHECK(build_ring(n, s).kappa() == doctest::Approx(ring_kappa_oracle(n, s)).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(build_ring(2, 0.5), InvalidSizeError);
  CHECK_THROWS_AS(build_ring(4, 0.0), ParameterError);
}

TEST_CASE("load_matrix validation") {
  CHECK_THROWS_AS(load_matrix(MatrixXd::Identity(2, 2)), ConnectivityError);
  MatrixXd half(2, 2);
  half << 0.5, 0.5, 0.5, 0.5;
  CHECK(load_matrix(half).kappa() < 1e-15);
  MatrixXd row_only(2, 2);
  row_only << 0.9, 0.1, 0.5, 0.5;
  CHECK_THROWS_AS(load_matrix(row_only), NotDoublyStochasticError);
  CHECK_THROWS_AS(load_matrix(MatrixXd::Zero(2, 3)), InvalidSizeError);
  MatrixXd neg(2, 2);
  neg << 1.5, -0.5, -0.5, 1.5;
  CHECK_THROWS_AS(load_matrix(neg), NotDoublyStochasticError);
  // Bipartite swap: strongly connected but the spectrum has -1.
  MatrixXd swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK_THROWS_AS(load_matrix(swap), DegenerateSpectrumError);
  // Slightly off within the load tolerance is accepted.
  MatrixXd fuzzy = half;
  fuzzy(0, 0) += 1e-11;
  fuzzy(0, 1) -= 1e-11;
  CHECK_NOTHROW(load_matrix(fuzzy));
}

TEST_CASE("kappa of symmetric matrices equals second-largest |eigenvalue|") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7;
    MatrixXd w = metropolis(n, rng);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(w);
    Eigen::VectorXd mags = es.eigenvalues().cwiseAbs();
    std::sort(mags.data(), mags.data() + n);
    // Largest is the Perron eigenvalue 1.
    const double second = n > 1 ? mags(n - 2) : 0.0;
    CHECK(compute_kappa(w) == doctest::Approx(second).epsilon(1e-10));
  }
}

TEST_CASE("mixing properties on random matrices") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 7;
    MatrixXd w = trial % 2 ? metropolis(n, rng) : cyclic_mix(std::max(n, 3), 0.3 + 0.02 * trial);
    MixingMatrix m = load_matrix(w);
    const int N = m.size();
    const MatrixXd J = MatrixXd::Constant(N, N, 1.0 / N);
    const MatrixXd A = m.weights();
    CHECK((A * J - J).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((J * A - J).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::JacobiSVD<MatrixXd> svd(A - MatrixXd::Identity(N, N));
    CHECK(svd.singularValues()(0) <= 2.0 + 1e-12);
    for (int s = 0; s < 100; ++s) {
      const int dim = 2;
      MatrixXd v(N, dim);  // row i is agent i's block
      for (int k = 0; k < v.size(); ++k) v(k) = g(rng);
      MatrixXd mean = J * v;
      const double lhs = (A * v - mean).norm();
      const double rhs = m.kappa() * (v - mean).norm();
      CHECK(lhs <= rhs + 1e-12);
      CHECK(((A * v).colwise().mean() - v.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("non-symmetric matrix uses singular values") {
  MixingMatrix m = load_matrix(cyclic_mix(4, 0.5));
  // Eigenvalues of 0.5 I + 0.5 P have modulus up to |0.5 + 0.5 i| = 0.707;
  // the singular value of the deflated matrix is the same for this normal P.
  CHECK(m.kappa() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(m.in_neighbors(0) == std::vector<int>{1});
  CHECK(m.out_neighbors(1) == std::vector<int>{0});
}

TEST_CASE("matrix file round trip") {
  MixingMatrix m = build_ring(5, 0.3);
  std::stringstream ss;
  write_matrix(ss, m);
  MixingMatrix back = read_matrix(ss);
  CHECK(back.weights() == m.weights());
  std::istringstream bad("2\n0.5 0.5\n0.5\n");
  CHECK_THROWS_AS(read_matrix(bad), ShapeError);
  std::istringstream junk("2\n0.5 0.5x\n0.5 0.5\n");
  CHECK_THROWS_AS(read_matrix(junk), ConfigError);
}
