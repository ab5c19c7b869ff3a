#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace evgrid {

// sum_k coef_k x_k <= rhs
struct LinearRow {
  std::vector<std::pair<int, double>> coef;
  double rhs = 0.0;
};

// x_a * x_b - x_c^2 > 0. An index of -1 for `a` means the constant `a_value`.
struct ConeRow {
  int a = -1;
  double a_value = 0.0;
  int b = 0;
  int c = 0;
};

// Concave separable objective: fills gradient and diagonal Hessian of the
// function being maximized; returns false outside its domain.
using SeparableObjective = std::function<bool(const Eigen::VectorXd& x, Eigen::VectorXd& grad,
                                              Eigen::VectorXd& hess_diag)>;

struct BarrierProblem {
  int n = 0;
  SeparableObjective objective;
  std::vector<LinearRow> rows;
  std::vector<ConeRow> cones;
  Eigen::MatrixXd eq_a;  // equality constraints eq_a x = eq_b (may have 0 rows)
  Eigen::VectorXd eq_b;
};

struct BarrierOptions {
  double mu0 = 1.0;
  double mu_factor = 0.2;
  double newton_tol = 1e-10;
  double gap_tol = 1e-9;
  int max_newton = 100;  // per centering step
  bool polish = true;    // active-set KKT Newton after the path
  double stall_gap_tol = 1e-6;  // largest duality gap accepted when the path stalls unpolished
};

struct BarrierResult {
  Eigen::VectorXd x;
  Eigen::VectorXd row_mult;
  Eigen::VectorXd cone_mult;
  Eigen::VectorXd eq_mult;
  Eigen::VectorXd row_slack;
  Eigen::VectorXd cone_slack;
  double stationarity = 0.0;     // max-norm of the Lagrangian gradient
  double complementarity = 0.0;  // max multiplier * slack
  double kkt_residual = 0.0;
  double mu = 0.0;
  int newton_steps = 0;
  int outer_steps = 0;
  bool polished = false;
  bool stalled = false;  // path ended early on numerical breakdown
};

// Log-barrier Newton path following; x0 must be strictly feasible for the
// inequalities (equalities are enforced by projection onto their nullspace).
BarrierResult solve_barrier(const BarrierProblem& problem, const Eigen::VectorXd& x0,
                            const BarrierOptions& options = {});

}  // namespace evgrid
