#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "dqagt/errors.h"
#include "dqagt/problems.h"

using namespace dqagt;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

AggregativeProblem placement5() {
  return make_placement({{3, 5}, {6, 9}, {9, 8}, {6, 2}, {9, 2}},
                        std::vector<double>(5, 100.0));
}

VectorXd fd_gradient(const AggregativeProblem& p, const VectorXd& x, double h) {
  VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    VectorXd a = x, b = x;
    a(k) += h;
    b(k) -= h;
    g(k) = (eval_global(p, a) - eval_global(p, b)) / (2 * h);
  }
  return g;
}

// Hessian and gradient at zero of a quadratic, from function values alone:
// H_ij = f(e_i + e_j) - f(e_i) - f(e_j) + f(0), g_i = f(e_i) - f(0) - H_ii / 2.
MatrixXd value_hessian(const AggregativeProblem& p, Eigen::Index dim, VectorXd* grad0) {
  const VectorXd zero = VectorXd::Zero(dim);
  const double f0 = eval_global(p, zero);
  VectorXd fe(dim);
  for (Eigen::Index i = 0; i < dim; ++i) fe(i) = eval_global(p, VectorXd::Unit(dim, i));
  MatrixXd h(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const VectorXd e = VectorXd::Unit(dim, i) + VectorXd::Unit(dim, j);
      h(i, j) = eval_global(p, e) - fe(i) - fe(j) + f0;
    }
  }
  *grad0 = fe - VectorXd::Constant(dim, f0) - 0.5 * h.diagonal();
  return h;
}

}  // namespace

TEST_CASE("eval_global trivial values") {
  auto single = make_placement({{0, 0}}, {1.0});
  CHECK(eval_global(single, VectorXd::Zero(2)) == 0.0);
  auto p = make_placement({{3, 5}}, {7.0});
  CHECK(eval_aggregated_gradient(p, Vector2d(3, 5)).norm() == 0.0);
  CHECK_THROWS_AS(eval_global(p, VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("placement aggregate is sum x_i / sqrt(N)") {
  auto p = placement5();
  VectorXd x = VectorXd::LinSpaced(10, 1, 10);
  VectorXd expect = VectorXd::Zero(2);
  for (int i = 0; i < 5; ++i) expect += x.segment(2 * i, 2);
  expect /= std::sqrt(5.0);
  CHECK((aggregate_value(p, x) - expect).norm() <= 1e-12);
}

TEST_CASE("bandwidth sharing objective") {
  for (int n : {1, 2, 4, 7}) {
    auto p = make_bandwidth_sharing(n, 0.0);
    VectorXd x = VectorXd::Constant(n, 1.0 / (2 * n));
    CHECK(eval_global(p, x) == doctest::Approx(-0.25).epsilon(1e-14));
  }
  auto p2 = make_bandwidth_sharing(2, 0.0);
  CHECK(eval_global(p2, VectorXd::Constant(2, 0.25)) == doctest::Approx(-0.25));

  // Regularised: stationarity -1 + 2S + 2 reg x_i = 0 with equal shares.
  auto p3 = make_bandwidth_sharing(3, 0.01);
  auto sol = solve_reference(p3, 1e-12, 1000);
  for (int i = 0; i < 3; ++i) {
    CHECK(sol.x_star(i) == doctest::Approx(1.0 / (6.0 + 0.02)).epsilon(1e-12));
  }
  CHECK(p3.constants().mu > 0.0);
}

TEST_CASE("gradients match finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  std::vector<AggregativeProblem> probs = {placement5(), make_bandwidth_sharing(4, 0.01),
                                           make_quadratic_synthetic(3, 2, 2, 9),
                                           make_quadratic_synthetic(4, 3, 1, 2)};
  for (const auto& p : probs) {
    const Eigen::Index dim = static_cast<Eigen::Index>(p.n_agents()) * p.dim_x();
    for (int trial = 0; trial < 50; ++trial) {
      VectorXd x(dim);
      for (Eigen::Index k = 0; k < dim; ++k) x(k) = u(rng);
      VectorXd g = eval_aggregated_gradient(p, x);
      VectorXd fd = fd_gradient(p, x, 1e-4);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, g.norm()));
    }
    // Per-agent partial derivatives.
    for (int i = 0; i < p.n_agents(); ++i) {
      const LocalCost& f = p.agent(i);
      VectorXd xi = VectorXd::Constant(p.dim_x(), 1.3), chi = VectorXd::Constant(p.dim_agg(), 0.7);
      for (int k = 0; k < p.dim_x(); ++k) {
        VectorXd a = xi, b = xi;
        a(k) += 1e-5;
        b(k) -= 1e-5;
        const double fd = (f.value(a, chi) - f.value(b, chi)) / 2e-5;
        const double an = f.grad_x(xi, chi)(k);
        CHECK(std::abs(fd - an) <= std::max(1e-6, 1e-4 * std::abs(an)));
        VectorXd ga = f.aggregate(a), gb = f.aggregate(b);
        VectorXd col = (ga - gb) / 2e-5;
        CHECK((col.transpose() - f.aggregate_jacobian(xi).row(k)).norm() <= 1e-6);
      }
      for (int k = 0; k < p.dim_agg(); ++k) {
        VectorXd a = chi, b = chi;
        a(k) += 1e-5;
        b(k) -= 1e-5;
        const double fd = (f.value(xi, a) - f.value(xi, b)) / 2e-5;
        const double an = f.grad_chi(xi, chi)(k);
        CHECK(std::abs(fd - an) <= std::max(1e-6, 1e-4 * std::abs(an)));
      }
    }
  }
}

TEST_CASE("placement references") {
  auto one = make_placement({{3, 5}}, {7.0});
  auto s1 = solve_reference(one, 1e-12, 100);
  CHECK((s1.x_star - Vector2d(3, 5)).norm() <= 1e-12);
  CHECK(s1.grad_norm <= 1e-12);

  // N = 2, targets (0,0), (2,0), gamma = 1: per coordinate the stationarity
  // system is (2I + (1 - sqrt2) 11^T) u = r, giving x1 = sqrt2/4, x2 = 1 + sqrt2/4.
  auto two = make_placement({{0, 0}, {2, 0}}, {1.0, 1.0});
  auto s2 = solve_reference(two, 1e-12, 100);
  const double q = std::sqrt(2.0) / 4;
  VectorXd expect(4);
  expect << q, 0, 1 + q, 0;
  CHECK((s2.x_star - expect).norm() <= 1e-12);
  auto gd = solve_reference(two, 1e-12, 1'000'000, ReferenceMethod::kGradientDescent);
  CHECK((gd.x_star - expect).norm() <= 1e-10);
}

TEST_CASE("placement instance") {
  auto p = placement5();
  const auto& c = p.constants();
  CHECK(c.mu == doctest::Approx(202.0).epsilon(1e-10));
  CHECK(c.l2 == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(c.l3 == doctest::Approx(5.0 * std::sqrt(5.0)).epsilon(1e-10));
  auto lin = solve_reference(p, 1e-9, 100);
  auto gd = solve_reference(p, 1e-9, 1'000'000, ReferenceMethod::kGradientDescent);
  CHECK((lin.x_star - gd.x_star).lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK(eval_global(p, lin.x_star) == lin.f_star);
  // chi* = sqrt(N) mean(x*).
  VectorXd mean = VectorXd::Zero(2);
  for (int i = 0; i < 5; ++i) mean += lin.x_star.segment(2 * i, 2);
  mean /= 5;
  CHECK((lin.chi_star - std::sqrt(5.0) * mean).norm() <= 1e-12);
  // gamma_i = 100 pins every x_i close to its target.
  const std::vector<Vector2d> r = {{3, 5}, {6, 9}, {9, 8}, {6, 2}, {9, 2}};
  for (int i = 0; i < 5; ++i) CHECK((lin.x_star.segment(2 * i, 2) - r[i]).norm() < 0.2);
  // Strict minimality along random directions.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 20; ++t) {
    VectorXd v(10);
    for (int k = 0; k < 10; ++k) v(k) = g(rng);
    v.normalize();
    CHECK(eval_global(p, lin.x_star + 1e-3 * v) > lin.f_star);
    CHECK(eval_global(p, lin.x_star - 1e-3 * v) > lin.f_star);
  }
}

TEST_CASE("quadratic synthetic family") {
  auto p = make_quadratic_synthetic(3, 2, 2, 42);
  const Eigen::Index dim = 6;
  VectorXd grad0;
  MatrixXd h = value_hessian(p, dim, &grad0);
  VectorXd x_oracle = h.ldlt().solve(-grad0);
  auto sol = solve_reference(p, 1e-10, 100);
  CHECK((sol.x_star - x_oracle).norm() <= 1e-8);
  CHECK(sol.grad_norm <= 1e-10);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  CHECK(p.constants().mu == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-8));

  // Decoupled: x_i* = -P_i^{-1} b_i, read back from each agent's own gradient.
  auto d = make_quadratic_synthetic(3, 2, 2, 42, 0.0);
  auto ds = solve_reference(d, 1e-12, 100);
  for (int i = 0; i < 3; ++i) {
    const LocalCost& f = d.agent(i);
    VectorXd chi = VectorXd::Zero(2);
    VectorXd b = f.grad_x(VectorXd::Zero(2), chi);
    MatrixXd P(2, 2);
    for (int k = 0; k < 2; ++k) P.col(k) = f.grad_x(VectorXd::Unit(2, k), chi) - b;
    VectorXd xi = -P.inverse() * b;
    CHECK((ds.x_star.segment(2 * i, 2) - xi).norm() <= 1e-10);
  }

  // Jacobian bound holds by construction.
  for (int i = 0; i < 3; ++i) {
    Eigen::JacobiSVD<MatrixXd> svd(p.agent(i).aggregate_jacobian(VectorXd::Zero(2)));
    CHECK(svd.singularValues()(0) <= p.constants().l3 / 3 + 1e-12);
  }
  CHECK(p.constants().l3 >= 1.0);
}

TEST_CASE("constants hold on sampled pairs") {
  std::vector<AggregativeProblem> probs = {placement5(), make_bandwidth_sharing(4, 0.01),
                                           make_quadratic_synthetic(3, 2, 2, 9),
                                           make_quadratic_synthetic(5, 1, 3, 4)};
  for (const auto& p : probs) {
    auto sol = solve_reference(p, 1e-8, 1000);
    VectorXd x0 = sol.x_star + VectorXd::Constant(sol.x_star.size(), 3.0);
    auto box = default_operating_box(x0, sol.x_star);
    CHECK(box.radius == doctest::Approx(8.0));
    auto sample = spot_check_constants(p, box, 1000, 17);
    CHECK(sample.ok());
  }
  // Understated l1 is caught.
  auto p = placement5();
  RegularityConstants c = p.constants();
  c.l1 /= 2;
  auto bad = p.with_constants(c);
  auto sol = solve_reference(p, 1e-8, 100);
  auto sample = spot_check_constants(bad, default_operating_box(sol.x_star, sol.x_star), 200, 3);
  CHECK_FALSE(sample.ok());
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(make_placement({{1, 1}}, {0.0}), ParameterError);
  CHECK_THROWS_AS(make_placement({{1, 1}}, {-1.0}), ParameterError);
  CHECK_THROWS_AS(make_placement({{1, 1}, {2, 2}}, {1.0}), ParameterError);
  CHECK_THROWS_AS(make_placement({{-1, 1}}, {1.0}), ParameterError);
  CHECK_THROWS_AS(make_bandwidth_sharing(0, 0.1), InvalidSizeError);
  CHECK_THROWS_AS(make_quadratic_synthetic(0, 1, 1, 1), InvalidSizeError);
  auto p = placement5();
  CHECK_THROWS_AS(solve_reference(p, 0.0, 10), ParameterError);
  CHECK_THROWS_AS(solve_reference(p, 1e-30, 2, ReferenceMethod::kGradientDescent),
                  NoConvergenceError);
}
