#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dqagt {

// One agent's private data: cost f_i(x_i, chi) and aggregation map g_i(x_i).
// x_i has dimension n, chi and g_i(x_i) have dimension r. Implementations
// must be pure.
class LocalCost {
 public:
  virtual ~LocalCost() = default;

  virtual double value(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& chi) const = 0;
  virtual Eigen::VectorXd grad_x(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& chi) const = 0;
  virtual Eigen::VectorXd grad_chi(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& chi) const = 0;
  virtual Eigen::VectorXd aggregate(const Eigen::VectorXd& x) const = 0;
  // n x r matrix; column k is the gradient of the k-th component of g_i.
  virtual Eigen::MatrixXd aggregate_jacobian(
      const Eigen::VectorXd& x) const = 0;
};

// mu: strong convexity of the global cost. l1: smoothness of the global
// cost and of the tracked gradient map. l2: Lipschitz constant of the
// stacked chi-gradients. l3: ||jac g_i|| <= l3 / N.
struct RegularityConstants {
  double mu = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

// Minimise sum_i f_i(x_i, chi(x)) with chi(x) = (1/N) sum_i g_i(x_i).
// Stacked vectors place agent i's block at [i*n, (i+1)*n).
class AggregativeProblem {
 public:
  AggregativeProblem(std::string name, int dim_x, int dim_agg,
                     std::vector<std::shared_ptr<const LocalCost>> agents,
                     RegularityConstants constants, bool quadratic);

  const std::string& name() const { return name_; }
  int n_agents() const { return static_cast<int>(agents_.size()); }
  int dim_x() const { return dim_x_; }
  int dim_agg() const { return dim_agg_; }
  const LocalCost& agent(int i) const { return *agents_[i]; }
  const RegularityConstants& constants() const { return constants_; }

  // True when every gradient is affine and every g_i is linear, so the
  // stationarity system is linear and the constants are global.
  bool is_quadratic() const { return quadratic_; }

  AggregativeProblem with_constants(const RegularityConstants& c) const;

 private:
  std::string name_;
  int dim_x_;
  int dim_agg_;
  std::vector<std::shared_ptr<const LocalCost>> agents_;
  RegularityConstants constants_;
  bool quadratic_;
};

struct ReferenceSolution {
  Eigen::VectorXd x_star;
  Eigen::VectorXd chi_star;
  Eigen::VectorXd y_star;
  double f_star = 0.0;
  double grad_norm = 0.0;
};

// chi(x) = (1/N) sum_i g_i(x_i).
Eigen::VectorXd aggregate_value(const AggregativeProblem& p,
                                const Eigen::VectorXd& x);

double eval_global(const AggregativeProblem& p, const Eigen::VectorXd& x);

// True gradient of the global cost:
// grad_x f(x, 1 (x) chi) + jac g(x) [1 (x) (1/N) sum_i grad_chi f_i(x_i, chi)].
Eigen::VectorXd eval_aggregated_gradient(const AggregativeProblem& p,
                                         const Eigen::VectorXd& x);

// f_i = gamma_i ||x_i - r_i||^2 + ||x_i - chi||^2 with g_i(x_i) = sqrt(N) x_i,
// so chi(x) = sum_i x_i / sqrt(N). Targets lie in the nonnegative quadrant.
AggregativeProblem make_placement(const std::vector<Eigen::Vector2d>& targets,
                                  const std::vector<double>& gammas);

// Cooperative bandwidth sharing in minimisation form:
// f_i = -x_i (1 - N chi) + reg x_i^2, g_i(x_i) = x_i.
AggregativeProblem make_bandwidth_sharing(int n, double reg);

// f_i = 1/2 x^T P_i x + b_i^T x + 1/2 c_i ||chi - d_i||^2, g_i = G_i x / N,
// with P_i SPD (eigenvalues in [1, 3]) and ||G_i||_2 in [1, 2]. All draws
// come from mt19937_64(seed). `coupling` scales every c_i; zero decouples the
// agents.
AggregativeProblem make_quadratic_synthetic(int n_agents, int dim_x,
                                            int dim_agg, std::uint64_t seed,
                                            double coupling = 1.0);

// Exact constants for a quadratic problem, read off the assembled (constant)
// Hessian and Jacobian blocks.
RegularityConstants derive_quadratic_constants(const AggregativeProblem& p);

enum class ReferenceMethod { kAuto, kLinearSolve, kGradientDescent };

// kAuto uses the linear solve for quadratic problems and gradient descent
// with step 1/l1 otherwise. Throws NoConvergenceError if the gradient norm
// stays above `tol`.
ReferenceSolution solve_reference(const AggregativeProblem& p, double tol,
                                  int max_iter,
                                  ReferenceMethod method = ReferenceMethod::kAuto);

// Fills chi*, y*, f*, and the gradient norm for a given minimiser.
ReferenceSolution assemble_reference(const AggregativeProblem& p,
                                     const Eigen::VectorXd& x_star);

// Axis-aligned cube used to spot-check locally defined constants.
struct OperatingBox {
  Eigen::VectorXd center;
  double radius = 0.0;
};

// Cube of radius 2 (||x0 - x*||_inf + 1) around x*.
OperatingBox default_operating_box(const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& x_star);

// Largest ratios observed over random point pairs in the box. Each ratio
// should not exceed one when the declared constants hold.
struct ConstantsSample {
  double smoothness_ratio = 0.0;   // ||dF'|| / (l1 ||dx||)
  double convexity_ratio = 0.0;    // mu ||dx||^2 / <dF', dx>
  double chi_lipschitz_ratio = 0.0;  // ||d grad_chi f|| / (l2 (||dx||+||dz||))
  double jacobian_ratio = 0.0;     // N ||jac g_i|| / l3
  bool ok() const {
    constexpr double slack = 1.0 + 1e-9;
    return smoothness_ratio <= slack && convexity_ratio <= slack &&
           chi_lipschitz_ratio <= slack && jacobian_ratio <= slack;
  }
};

ConstantsSample spot_check_constants(const AggregativeProblem& p,
                                     const OperatingBox& box, int pairs,
                                     std::uint64_t seed);

// Deterministic uniform draws shared by the generators; unlike
// std::uniform_real_distribution the sequence is fixed across standard
// libraries.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double next(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dqagt
