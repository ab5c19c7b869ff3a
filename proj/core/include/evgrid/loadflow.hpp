#pragma once

#include <string>
#include <vector>

#include "evgrid/grid.hpp"

namespace evgrid {

// Per-node active power Lambda_i (index 0 unused). Reactive EV load is zero.
using NodePower = std::vector<double>;

// Per-edge quantities are indexed by the child node of the edge.
struct AcSolution {
  std::vector<double> v;
  std::vector<double> w_pp;
  std::vector<double> w_pk;
  std::vector<double> w_kk;
  std::vector<double> loss_p;
  std::vector<double> loss_q;
  std::vector<double> p_sub;  // P_N(k)
  std::vector<double> q_sub;  // Q_N(k)
  bool converged = false;
  int iterations = 0;
  double damping = 1.0;
};

struct AcOptions {
  double tol = 1e-10;
  int max_iter = 200;
  double damping = 1.0;
  double fallback_damping = 0.5;
};

std::vector<double> distflow_voltages(const Network& net, const NodePower& lam);

AcSolution ac_solve(const Network& net, const NodePower& lam, const AcOptions& options = {});

// max_k |w_pk - w_kk - P_N(k) R - Q_N(k) X|
double kvl_residual(const Network& net, const AcSolution& sol);
// feeder injection - (sum of loads + sum of losses)
double energy_balance_residual(const Network& net, const NodePower& lam, const AcSolution& sol);

struct DominationReport {
  std::vector<double> w_lin;
  std::vector<double> w_ac;
  std::vector<double> gap;  // w_lin - w_ac
  std::vector<int> violations;
  bool ok = true;
  std::string diagnostic;
};

DominationReport check_domination(const Network& net, const NodePower& lam, const AcOptions& options = {});

}  // namespace evgrid
