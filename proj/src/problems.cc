#include "dqagt/problems.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include "dqagt/errors.h"

namespace dqagt {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class PlacementCost final : public LocalCost {
 public:
  PlacementCost(Eigen::Vector2d target, double gamma, int n_agents)
      : target_(std::move(target)),
        gamma_(gamma),
        scale_(std::sqrt(static_cast<double>(n_agents))) {}

  double value(const VectorXd& x, const VectorXd& chi) const override {
    return gamma_ * (x - target_).squaredNorm() + (x - chi).squaredNorm();
  }
  VectorXd grad_x(const VectorXd& x, const VectorXd& chi) const override {
    return 2.0 * gamma_ * (x - target_) + 2.0 * (x - chi);
  }
  VectorXd grad_chi(const VectorXd& x, const VectorXd& chi) const override {
    return -2.0 * (x - chi);
  }
  VectorXd aggregate(const VectorXd& x) const override { return scale_ * x; }
  MatrixXd aggregate_jacobian(const VectorXd&) const override {
    return scale_ * MatrixXd::Identity(2, 2);
  }

 private:
  Eigen::Vector2d target_;
  double gamma_;
  double scale_;
};

class BandwidthCost final : public LocalCost {
 public:
  BandwidthCost(int n_agents, double reg)
      : n_(static_cast<double>(n_agents)), reg_(reg) {}

  double value(const VectorXd& x, const VectorXd& chi) const override {
    return -x(0) * (1.0 - n_ * chi(0)) + reg_ * x(0) * x(0);
  }
  VectorXd grad_x(const VectorXd& x, const VectorXd& chi) const override {
    return VectorXd::Constant(1, -(1.0 - n_ * chi(0)) + 2.0 * reg_ * x(0));
  }
  VectorXd grad_chi(const VectorXd& x, const VectorXd&) const override {
    return VectorXd::Constant(1, n_ * x(0));
  }
  VectorXd aggregate(const VectorXd& x) const override { return x; }
  MatrixXd aggregate_jacobian(const VectorXd&) const override {
    return MatrixXd::Identity(1, 1);
  }

 private:
  double n_;
  double reg_;
};

class QuadraticCost final : public LocalCost {
 public:
  QuadraticCost(MatrixXd p, VectorXd b, double c, VectorXd d, MatrixXd g,
                int n_agents)
      : p_(std::move(p)),
        b_(std::move(b)),
        c_(c),
        d_(std::move(d)),
        g_(std::move(g)),
        inv_n_(1.0 / n_agents) {}

  double value(const VectorXd& x, const VectorXd& chi) const override {
    return 0.5 * x.dot(p_ * x) + b_.dot(x) + 0.5 * c_ * (chi - d_).squaredNorm();
  }
  VectorXd grad_x(const VectorXd& x, const VectorXd&) const override {
    return p_ * x + b_;
  }
  VectorXd grad_chi(const VectorXd&, const VectorXd& chi) const override {
    return c_ * (chi - d_);
  }
  VectorXd aggregate(const VectorXd& x) const override {
    return inv_n_ * (g_ * x);
  }
  MatrixXd aggregate_jacobian(const VectorXd&) const override {
    return inv_n_ * g_.transpose();
  }

 private:
  MatrixXd p_;
  VectorXd b_;
  double c_;
  VectorXd d_;
  MatrixXd g_;
  double inv_n_;
};

void check_shape(const AggregativeProblem& p, const VectorXd& x) {
  const Eigen::Index expected =
      static_cast<Eigen::Index>(p.n_agents()) * p.dim_x();
  if (x.size() != expected) {
    throw ShapeError("stacked x has length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(expected));
  }
}

// Jacobian and offset of an affine map, by probing the origin and unit
// vectors. Exact up to rounding for affine maps.
template <class Map>
MatrixXd probe_affine(const Map& f, Eigen::Index in_dim, VectorXd* offset) {
  VectorXd origin = VectorXd::Zero(in_dim);
  VectorXd f0 = f(origin);
  MatrixXd jac(f0.size(), in_dim);
  for (Eigen::Index k = 0; k < in_dim; ++k) {
    origin(k) = 1.0;
    jac.col(k) = f(origin) - f0;
    origin(k) = 0.0;
  }
  if (offset) *offset = std::move(f0);
  return jac;
}

double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues()(0);
}

// grad_x f(x, z) + jac g(x) [1 (x) (1/N) sum_i grad_chi f_i(x_i, z_i)] for
// stacked trackers z. Equals the true gradient when z = 1 (x) chi(x).
VectorXd tracked_gradient(const AggregativeProblem& p, const VectorXd& x,
                          const VectorXd& z) {
  const int n_agents = p.n_agents(), n = p.dim_x(), r = p.dim_agg();
  VectorXd mean_grad_chi = VectorXd::Zero(r);
  for (int i = 0; i < n_agents; ++i) {
    mean_grad_chi += p.agent(i).grad_chi(x.segment(i * n, n), z.segment(i * r, r));
  }
  mean_grad_chi /= n_agents;
  VectorXd out(x.size());
  for (int i = 0; i < n_agents; ++i) {
    VectorXd xi = x.segment(i * n, n);
    out.segment(i * n, n) = p.agent(i).grad_x(xi, z.segment(i * r, r)) +
                            p.agent(i).aggregate_jacobian(xi) * mean_grad_chi;
  }
  return out;
}

VectorXd stacked_grad_chi(const AggregativeProblem& p, const VectorXd& x,
                          const VectorXd& z) {
  const int n_agents = p.n_agents(), n = p.dim_x(), r = p.dim_agg();
  VectorXd out(static_cast<Eigen::Index>(n_agents) * r);
  for (int i = 0; i < n_agents; ++i) {
    out.segment(i * r, r) =
        p.agent(i).grad_chi(x.segment(i * n, n), z.segment(i * r, r));
  }
  return out;
}

// Hessian of the global cost and gradient at zero, for quadratic problems.
MatrixXd global_hessian(const AggregativeProblem& p, VectorXd* grad_at_zero) {
  const Eigen::Index dim = static_cast<Eigen::Index>(p.n_agents()) * p.dim_x();
  MatrixXd h = probe_affine(
      [&](const VectorXd& x) { return eval_aggregated_gradient(p, x); }, dim,
      grad_at_zero);
  return 0.5 * (h + h.transpose());
}

ReferenceSolution solve_linear(const AggregativeProblem& p, double tol) {
  VectorXd b;
  MatrixXd h = global_hessian(p, &b);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(h);
  VectorXd x = qr.solve(-b);
  // One refinement step against the true gradient.
  x -= qr.solve(eval_aggregated_gradient(p, x));
  ReferenceSolution sol = assemble_reference(p, x);
  if (!(sol.grad_norm <= tol)) {
    throw NoConvergenceError(x, sol.grad_norm,
                             "linear solve left gradient norm " +
                                 std::to_string(sol.grad_norm));
  }
  return sol;
}

ReferenceSolution solve_descent(const AggregativeProblem& p, double tol,
                                int max_iter) {
  const double l1 = p.constants().l1;
  if (!(l1 > 0.0)) {
    throw DomainError("gradient-descent reference needs l1 > 0");
  }
  VectorXd x = VectorXd::Zero(static_cast<Eigen::Index>(p.n_agents()) * p.dim_x());
  double norm = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= max_iter; ++it) {
    VectorXd g = eval_aggregated_gradient(p, x);
    norm = g.norm();
    if (norm <= tol) return assemble_reference(p, x);
    if (it == max_iter) break;
    x -= g / l1;
  }
  throw NoConvergenceError(x, norm,
                           "gradient descent stopped at gradient norm " +
                               std::to_string(norm));
}

}  // namespace

AggregativeProblem::AggregativeProblem(
    std::string name, int dim_x, int dim_agg,
    std::vector<std::shared_ptr<const LocalCost>> agents,
    RegularityConstants constants, bool quadratic)
    : name_(std::move(name)),
      dim_x_(dim_x),
      dim_agg_(dim_agg),
      agents_(std::move(agents)),
      constants_(constants),
      quadratic_(quadratic) {
  if (agents_.empty() || dim_x_ < 1 || dim_agg_ < 1) {
    throw InvalidSizeError("problem needs at least one agent and positive dimensions");
  }
}

AggregativeProblem AggregativeProblem::with_constants(
    const RegularityConstants& c) const {
  AggregativeProblem copy = *this;
  copy.constants_ = c;
  return copy;
}

VectorXd aggregate_value(const AggregativeProblem& p, const VectorXd& x) {
  check_shape(p, x);
  const int n = p.dim_x();
  VectorXd chi = VectorXd::Zero(p.dim_agg());
  for (int i = 0; i < p.n_agents(); ++i) {
    chi += p.agent(i).aggregate(x.segment(i * n, n));
  }
  return chi / p.n_agents();
}

double eval_global(const AggregativeProblem& p, const VectorXd& x) {
  const VectorXd chi = aggregate_value(p, x);
  const int n = p.dim_x();
  double total = 0.0;
  for (int i = 0; i < p.n_agents(); ++i) {
    total += p.agent(i).value(x.segment(i * n, n), chi);
  }
  return total;
}

VectorXd eval_aggregated_gradient(const AggregativeProblem& p,
                                  const VectorXd& x) {
  const VectorXd chi = aggregate_value(p, x);
  return tracked_gradient(p, x, chi.replicate(p.n_agents(), 1));
}

AggregativeProblem make_placement(const std::vector<Eigen::Vector2d>& targets,
                                  const std::vector<double>& gammas) {
  if (targets.empty() || targets.size() != gammas.size()) {
    throw ParameterError("placement needs one gamma per target and N >= 1");
  }
  const int n_agents = static_cast<int>(targets.size());
  std::vector<std::shared_ptr<const LocalCost>> agents;
  for (int i = 0; i < n_agents; ++i) {
    if (!(gammas[i] > 0.0) || !std::isfinite(gammas[i])) {
      throw ParameterError("placement weight gamma_" + std::to_string(i) +
                           " must be positive");
    }
    if (!targets[i].allFinite() || (targets[i].array() < 0.0).any()) {
      throw ParameterError("placement target " + std::to_string(i) +
                           " must lie in the nonnegative quadrant");
    }
    agents.push_back(std::make_shared<PlacementCost>(targets[i], gammas[i], n_agents));
  }
  AggregativeProblem p("placement", 2, 2, std::move(agents), {}, true);
  return p.with_constants(derive_quadratic_constants(p));
}

AggregativeProblem make_bandwidth_sharing(int n, double reg) {
  if (n < 1) throw InvalidSizeError("bandwidth sharing needs n >= 1");
  if (!(reg >= 0.0)) throw ParameterError("regulariser must be nonnegative");
  std::vector<std::shared_ptr<const LocalCost>> agents;
  auto cost = std::make_shared<BandwidthCost>(n, reg);
  for (int i = 0; i < n; ++i) agents.push_back(cost);
  AggregativeProblem p("bandwidth", 1, 1, std::move(agents), {}, true);
  return p.with_constants(derive_quadratic_constants(p));
}

AggregativeProblem make_quadratic_synthetic(int n_agents, int dim_x,
                                            int dim_agg, std::uint64_t seed,
                                            double coupling) {
  if (n_agents < 1 || dim_x < 1 || dim_agg < 1) {
    throw InvalidSizeError("quadratic family needs positive dimensions");
  }
  UniformSource rng(seed);
  std::vector<std::shared_ptr<const LocalCost>> agents;
  for (int i = 0; i < n_agents; ++i) {
    MatrixXd raw(dim_x, dim_x);
    for (Eigen::Index k = 0; k < raw.size(); ++k) raw(k) = rng.next(-1.0, 1.0);
    MatrixXd q = Eigen::HouseholderQR<MatrixXd>(raw).householderQ();
    VectorXd eig(dim_x);
    for (int k = 0; k < dim_x; ++k) eig(k) = rng.next(1.0, 3.0);
    MatrixXd p = q * eig.asDiagonal() * q.transpose();
    p = 0.5 * (p + p.transpose());

    VectorXd b(dim_x);
    for (int k = 0; k < dim_x; ++k) b(k) = rng.next(-1.0, 1.0);
    const double c = coupling * rng.next(0.5, 1.5);
    VectorXd d(dim_agg);
    for (int k = 0; k < dim_agg; ++k) d(k) = rng.next(-1.0, 1.0);

    MatrixXd g(dim_agg, dim_x);
    for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = rng.next(-1.0, 1.0);
    const double target_norm = rng.next(1.0, 2.0);
    const double norm = spectral_norm(g);
    if (norm > 0.0) g *= target_norm / norm;

    agents.push_back(std::make_shared<QuadraticCost>(
        std::move(p), std::move(b), c, std::move(d), std::move(g), n_agents));
  }
  AggregativeProblem prob("quadratic", dim_x, dim_agg, std::move(agents), {}, true);
  return prob.with_constants(derive_quadratic_constants(prob));
}

RegularityConstants derive_quadratic_constants(const AggregativeProblem& p) {
  const int n_agents = p.n_agents(), n = p.dim_x(), r = p.dim_agg();
  const Eigen::Index nx = static_cast<Eigen::Index>(n_agents) * n;
  const Eigen::Index nz = static_cast<Eigen::Index>(n_agents) * r;

  MatrixXd hess = global_hessian(p, nullptr);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
  const double lambda_min = eig.eigenvalues().minCoeff();
  const double lambda_max = eig.eigenvalues().maxCoeff();

  auto split_probe = [&](auto&& map) {
    return probe_affine(
        [&](const VectorXd& xz) {
          return map(VectorXd(xz.head(nx)), VectorXd(xz.tail(nz)));
        },
        nx + nz, nullptr);
  };
  MatrixXd phi = split_probe(
      [&](const VectorXd& x, const VectorXd& z) { return tracked_gradient(p, x, z); });
  MatrixXd psi = split_probe(
      [&](const VectorXd& x, const VectorXd& z) { return stacked_grad_chi(p, x, z); });

  RegularityConstants c;
  c.mu = std::max(lambda_min, 0.0);
  c.l1 = std::max({lambda_max, spectral_norm(phi.leftCols(nx)),
                   spectral_norm(phi.rightCols(nz))});
  c.l2 = std::max(spectral_norm(psi.leftCols(nx)), spectral_norm(psi.rightCols(nz)));
  double jac = 0.0;
  for (int i = 0; i < n_agents; ++i) {
    jac = std::max(jac, spectral_norm(p.agent(i).aggregate_jacobian(VectorXd::Zero(n))));
  }
  c.l3 = n_agents * jac;
  return c;
}

ReferenceSolution assemble_reference(const AggregativeProblem& p,
                                     const VectorXd& x_star) {
  ReferenceSolution sol;
  sol.x_star = x_star;
  sol.chi_star = aggregate_value(p, x_star);
  const int n = p.dim_x();
  sol.y_star = VectorXd::Zero(p.dim_agg());
  for (int i = 0; i < p.n_agents(); ++i) {
    sol.y_star += p.agent(i).grad_chi(x_star.segment(i * n, n), sol.chi_star);
  }
  sol.y_star /= p.n_agents();
  sol.f_star = eval_global(p, x_star);
  sol.grad_norm = eval_aggregated_gradient(p, x_star).norm();
  return sol;
}

ReferenceSolution solve_reference(const AggregativeProblem& p, double tol,
                                  int max_iter, ReferenceMethod method) {
  if (!(tol > 0.0)) throw ParameterError("reference tolerance must be positive");
  if (method == ReferenceMethod::kAuto) {
    method = p.is_quadratic() ? ReferenceMethod::kLinearSolve
                              : ReferenceMethod::kGradientDescent;
  }
  if (method == ReferenceMethod::kLinearSolve) {
    if (!p.is_quadratic()) {
      throw DomainError("linear-solve reference requires a quadratic problem");
    }
    return solve_linear(p, tol);
  }
  return solve_descent(p, tol, max_iter);
}

OperatingBox default_operating_box(const VectorXd& x0, const VectorXd& x_star) {
  return {x_star, 2.0 * ((x0 - x_star).lpNorm<Eigen::Infinity>() + 1.0)};
}

ConstantsSample spot_check_constants(const AggregativeProblem& p,
                                     const OperatingBox& box, int pairs,
                                     std::uint64_t seed) {
  const RegularityConstants& c = p.constants();
  const int n_agents = p.n_agents(), n = p.dim_x(), r = p.dim_agg();
  UniformSource rng(seed);
  auto sample_x = [&]() {
    VectorXd x(box.center.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      x(k) = box.center(k) + box.radius * rng.next(-1.0, 1.0);
    }
    return x;
  };
  auto sample_z = [&](const VectorXd& x) {
    VectorXd z = aggregate_value(p, x).replicate(n_agents, 1);
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) += box.radius * rng.next(-1.0, 1.0);
    return z;
  };

  ConstantsSample out;
  for (int s = 0; s < pairs; ++s) {
    VectorXd xa = sample_x(), xb = sample_x();
    VectorXd za = sample_z(xa), zb = sample_z(xb);
    VectorXd dg = eval_aggregated_gradient(p, xa) - eval_aggregated_gradient(p, xb);
    VectorXd dx = xa - xb;
    const double dxn = dx.norm();
    if (dxn == 0.0) continue;
    out.smoothness_ratio = std::max(out.smoothness_ratio, dg.norm() / (c.l1 * dxn));
    const double inner = dg.dot(dx);
    if (c.mu > 0.0) {
      out.convexity_ratio = std::max(
          out.convexity_ratio,
          inner > 0.0 ? c.mu * dxn * dxn / inner : std::numeric_limits<double>::infinity());
    }
    const double dpsi =
        (stacked_grad_chi(p, xa, za) - stacked_grad_chi(p, xb, zb)).norm();
    const double dist = dxn + (za - zb).norm();
    if (dpsi > 0.0) {
      out.chi_lipschitz_ratio =
          std::max(out.chi_lipschitz_ratio,
                   c.l2 > 0.0 ? dpsi / (c.l2 * dist) : std::numeric_limits<double>::infinity());
    }
    for (int i = 0; i < n_agents; ++i) {
      const double jn = spectral_norm(p.agent(i).aggregate_jacobian(xa.segment(i * n, n)));
      out.jacobian_ratio = std::max(out.jacobian_ratio, n_agents * jn / c.l3);
    }
  }
  (void)r;
  return out;
}

}  // namespace dqagt
