#pragma once

#include <vector>

#include "evgrid/allocator.hpp"
#include "evgrid/stochastics.hpp"

namespace evgrid {

// Fluid trajectory on a uniform grid; all matrices are [node][type].
struct FluidTrajectory {
  std::vector<double> t;
  std::vector<NodeTypeMatrix> z;
  std::vector<NodeTypeMatrix> q;
  std::vector<NodeTypeMatrix> gamma;
  std::vector<NodeTypeMatrix> service;  // int_0^t p(z(u)) du
  int iterations = 0;
  double last_change = 0.0;  // sup-norm gap between the last two iterates
};

struct PicardOptions {
  LoadModel model = LoadModel::kDistflow;
  double dt = 0.0;  // 0: smallest E[D] over types / 200
  double tol = 1e-8;
  int max_iter = 200;
  std::vector<JointBD> initial_joint;  // law of the initial population per type; empty: same as arrivals
  AllocatorOptions allocator;
};

// Fixed-point iteration of the transient fluid equations. Each sweep marches
// through the grid (trapezoidal s-integral, tanh-sinh on steps with large
// service, exact in-step service for linear z and lam) and solves the
// implicit endpoint term locally.
FluidTrajectory picard_solve(const Network& net, const ClassTable& classes, const StateZ& init, double horizon,
                             const PicardOptions& options = {});

struct InvariantPoint {
  NodeTypeMatrix gamma;
  NodeTypeMatrix lam_star;
  NodeTypeMatrix z_star;
  NodeTypeMatrix p_star;
  NodeTypeMatrix success_prob;
  NodeTypeMatrix h_cap;
  std::vector<double> h_volt_lo;
  std::vector<double> h_volt_hi;
  std::vector<double> h_node;
  double objective = 0.0;        // sum of int_1^{p*} u'(x) g'(x) dx
  double little_residual = 0.0;  // max |z* - gamma E[min(D, B / p*)]|
  double kkt_residual = 0.0;
  double exactness_gap = 0.0;  // AC only
  bool support_condition_ok = true;
};

struct InvariantOptions {
  GammaConvention gamma = GammaConvention::kBlockingCap;
  AllocatorOptions allocator;
};

// Maximizes sum G_ij(Lambda_ij) with G' = u'(g^{-1}) over the load-flow
// feasible set in Lambda; model is kDistflow or kAc.
InvariantPoint invariant_solve(const Network& net, const ClassTable& classes, LoadModel model,
                               const InvariantOptions& options = {});

// Closed-form trajectory for a line with K = inf, J = 1, independent
// exponential B and D, log utilities with w = cum_r, unbounded c_max and no
// node caps; z(0) must be a nonnegative multiple of lambda.
FluidTrajectory explicit_markov(const Network& net, const ClassTable& classes, const StateZ& init, double horizon,
                                double dt);

struct DiagnosticEntry {
  int node = 0;
  int type = 0;
  double lhs = 0.0;          // G(Lambda*) by quadrature from x0 = 1
  double rhs = 0.0;          // gamma E[D u(min(p*, B / D))]
  double anchor_term = 0.0;  // gamma E[D u(min(1, B / D))]
  double rel_gap = 0.0;      // |lhs - rhs| / max(|rhs|, 1e-300)
  double rel_gap_anchored = 0.0;  // |lhs - (rhs - anchor_term)| / max(|rhs - anchor_term|, 1e-300)
};

// Log utilities only.
std::vector<DiagnosticEntry> objective_diagnostic(const InvariantPoint& point, const ClassTable& classes);

// gamma E[D u(min(p, B / D))]
double expected_duration_utility(double gamma, const JointBD& joint, const Utility& u, double p);

struct StabilityReport {
  std::vector<double> final_distance;               // per initial state
  std::vector<std::vector<double>> distance_path;   // sup-norm distance to z* per grid point
};

StabilityReport stability_check(const Network& net, const ClassTable& classes, const std::vector<StateZ>& inits,
                                double horizon, const PicardOptions& options = {});

}  // namespace evgrid
