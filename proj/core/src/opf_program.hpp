#pragma once

#include <vector>

#include "evgrid/barrier.hpp"
#include "evgrid/grid.hpp"

namespace evgrid::detail {

// Decision variable that draws power coef * v at `node`.
struct LoadVar {
  int node = 0;
  int type = 0;
  double coef = 1.0;
  double ub = 0.0;  // upper bound on v (may be +inf)
};

enum class RowKind { kNonneg, kUpper, kNodeCap, kVoltLo, kVoltHi, kFlowNonneg };

struct RowTag {
  RowKind kind;
  int node = 0;
  int var = -1;
};

struct OpfProgram {
  BarrierProblem problem;
  std::vector<RowTag> tags;
  std::vector<int> wkk;  // AC: variable index of W_kk per node (-1 for root)
  std::vector<int> wpk;  // AC: variable index of W_{p(k)k}
  int n_load = 0;
  bool ac = false;
};

// Voltage / node-cap / box constraints over the load variables, Distflow
// (linear) or the relaxed AC cone system.
OpfProgram build_opf(const Network& net, const std::vector<LoadVar>& vars, bool ac);

// Strictly feasible start (load part scaled by `scale`), AC part completed so
// that the branch equations hold with strict cone slack. Throws InfeasibleError.
Eigen::VectorXd opf_start(const Network& net, const std::vector<LoadVar>& vars, const OpfProgram& prog);

// max_edge (w_pp w_kk - w_pk^2) / (w_pp w_kk) at an AC solution.
double exactness_gap(const Network& net, const OpfProgram& prog, const Eigen::VectorXd& x);

// Node power implied by the load variables.
std::vector<double> node_power_of(const Network& net, const std::vector<LoadVar>& vars, const Eigen::VectorXd& x);

}  // namespace evgrid::detail
