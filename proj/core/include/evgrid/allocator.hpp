#pragma once

#include <string>
#include <vector>

#include "evgrid/barrier.hpp"
#include "evgrid/grid.hpp"
#include "evgrid/loadflow.hpp"
#include "evgrid/stochastics.hpp"

namespace evgrid {

struct StateZ {
  NodeTypeMatrix z;  // uncharged EVs (real-valued for fluid callers)
  NodeTypeMatrix q;  // all EVs present
};

StateZ make_state(const Network& net, const NodeTypeMatrix& z);

struct Allocation {
  NodeTypeMatrix p;
  NodeTypeMatrix lam;             // z * p
  NodePower node_power;           // sum_j lam
  std::vector<double> h_volt_lo;  // h1: lower voltage bound, per node
  std::vector<double> h_volt_hi;  // h2: upper voltage bound, per node
  std::vector<double> h_node;     // h3: node power cap, per node
  NodeTypeMatrix h_cap;           // h4: c_max, per (node, type)
  std::vector<double> w;          // squared voltages at the solution
  double kkt_residual = 0.0;
  double exactness_gap = 0.0;  // AC only: gap of the rank-one recovered point
  double relaxed_cone_gap = 0.0;  // AC only: max normalized cone slack of the relaxed W
  bool gap_flag = false;       // exactness gap above 1e-6
  int newton_steps = 0;
};

struct AllocatorOptions {
  BarrierOptions barrier;
  double exactness_warn = 1e-6;
};

Allocation allocate_distflow(const Network& net, const ClassTable& classes, const StateZ& state,
                             const AllocatorOptions& options = {});

Allocation allocate_ac(const Network& net, const ClassTable& classes, const StateZ& state,
                       const AllocatorOptions& options = {});

// Equal rate delta / sum_i R_i sum_j z_ij on a line with w = cum_r and only the
// deepest voltage constraint.
Allocation fairness_closed_form(const Network& net, const ClassTable& classes, const StateZ& state);

// p_i(z) = delta / (R_i sum_l z_l): unit-weight proportional fairness on a
// line under the deepest voltage constraint (J = 1).
std::vector<double> unit_fairness_rates(const Network& net, const std::vector<double>& z);

struct BalanceReport {
  int checked = 0;
  int violations = 0;
  double max_rel_error = 0.0;
};

// p_i(z + e_k) p_k(z) = p_i(z) p_k(z + e_i) over the given states.
BalanceReport balance_check(const Network& net, const std::vector<std::vector<double>>& states,
                            double rel_tol = 1e-9);

// KKT stationarity residual of a Distflow allocation (linear voltage gradient).
double distflow_kkt_residual(const Network& net, const ClassTable& classes, const StateZ& state,
                             const Allocation& alloc);

enum class LoadModel { kDistflow, kAc, kClosedForm };

LoadModel parse_load_model(const std::string& name);
std::string to_string(LoadModel model);

Allocation allocate(LoadModel model, const Network& net, const ClassTable& classes, const StateZ& state,
                    const AllocatorOptions& options = {});

}  // namespace evgrid
