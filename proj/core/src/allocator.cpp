#include "evgrid/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evgrid/errors.hpp"
#include "opf_solve.hpp"

namespace evgrid {
namespace {

using detail::LoadVar;
using detail::RowKind;
using Eigen::VectorXd;

Allocation empty_allocation(const Network& net, int J) {
  Allocation a;
  a.p = zeros_like(net, J);
  a.lam = zeros_like(net, J);
  a.node_power.assign(net.size(), 0.0);
  a.h_volt_lo.assign(net.size(), 0.0);
  a.h_volt_hi.assign(net.size(), 0.0);
  a.h_node.assign(net.size(), 0.0);
  a.h_cap = zeros_like(net, J);
  a.w.assign(net.size(), net.w00);
  return a;
}

std::vector<LoadVar> active_vars(const Network& net, const ClassTable& classes, const StateZ& state) {
  std::vector<LoadVar> vars;
  for (int i = 1; i < net.size(); ++i) {
    for (int j = 0; j < classes.type_count; ++j) {
      double z = state.z[i][j];
      if (z < 0) throw ParameterError("state z must be nonnegative");
      if (z > 0) vars.push_back({i, j, z, classes.c_max[j]});
    }
  }
  return vars;
}

}  // namespace

namespace detail {

Allocation solve_opf(const Network& net, int type_count, const std::vector<LoadVar>& vars, bool ac,
                     const VarObjective& objective, const AllocatorOptions& options) {
  Allocation out = empty_allocation(net, type_count);
  if (vars.empty()) return out;

  OpfProgram prog = build_opf(net, vars, ac);
  double scale = 1.0;
  prog.problem.objective = [&](const VectorXd& x, VectorXd& g, VectorXd& h) {
    g.setZero();
    h.setZero();
    for (size_t a = 0; a < vars.size(); ++a) {
      auto k = static_cast<Eigen::Index>(a);
      if (!objective(static_cast<int>(a), x[k], g[k], h[k])) return false;
    }
    g *= scale;
    h *= scale;
    return true;
  };
  VectorXd x0 = opf_start(net, vars, prog);
  // Normalize the objective so that max_a |x_a df/dx_a| = 1 at the start.
  {
    VectorXd g(prog.problem.n), h(prog.problem.n);
    if (!prog.problem.objective(x0, g, h)) throw InfeasibleError("objective undefined at the starting point");
    double mag = 0.0;
    for (int a = 0; a < prog.n_load; ++a) mag = std::max(mag, std::abs(g[a] * x0[a]));
    if (mag > 0 && std::isfinite(mag)) scale = 1.0 / mag;
  }
  BarrierResult res = solve_barrier(prog.problem, x0, options.barrier);
  res.row_mult /= scale;
  res.cone_mult /= scale;
  res.eq_mult /= scale;
  res.kkt_residual /= scale;

  for (size_t a = 0; a < vars.size(); ++a) {
    double p = res.x[static_cast<Eigen::Index>(a)];
    out.p[vars[a].node][vars[a].type] = p;
    out.lam[vars[a].node][vars[a].type] = vars[a].coef * p;
    out.node_power[vars[a].node] += vars[a].coef * p;
  }
  for (size_t r = 0; r < prog.tags.size(); ++r) {
    const auto& tag = prog.tags[r];
    double m = res.row_mult[static_cast<Eigen::Index>(r)];
    switch (tag.kind) {
      case RowKind::kUpper:
        out.h_cap[tag.node][vars[tag.var].type] = m;
        break;
      case RowKind::kNodeCap:
        out.h_node[tag.node] = m;
        break;
      case RowKind::kVoltLo:
        // Distflow rows are written as (w00 - w_lin)/2 <= delta.
        out.h_volt_lo[tag.node] = ac ? m : 0.5 * m;
        break;
      case RowKind::kVoltHi:
        out.h_volt_hi[tag.node] = m;
        break;
      default:
        break;
    }
  }
  out.kkt_residual = res.kkt_residual;
  out.newton_steps = res.newton_steps;
  if (ac) {
    // Rank-one recovery: the load flow at the relaxed optimum's loads is a
    // rank-one point with the same objective; its bound violation and cone
    // gap certify exactness.
    out.relaxed_cone_gap = exactness_gap(net, prog, res.x);
    AcSolution sol;
    try {
      sol = ac_solve(net, out.node_power);
    } catch (const Error&) {
      sol.converged = false;
    }
    if (sol.converged) {
      out.w = sol.w_kk;
      out.w[0] = net.w00;
      double gap = 0.0;
      for (int k = 1; k < net.size(); ++k) {
        double pp = sol.w_pp[k] * sol.w_kk[k];
        gap = std::max(gap, (pp - sol.w_pk[k] * sol.w_pk[k]) / pp);
        gap = std::max(gap, (net.v_lo[k] - sol.w_kk[k]) / net.v_lo[k]);
        gap = std::max(gap, (sol.w_kk[k] - net.v_hi[k]) / net.v_hi[k]);
      }
      out.exactness_gap = std::max(gap, 0.0);
    } else {
      for (int k = 1; k < net.size(); ++k) out.w[k] = res.x[prog.wkk[k]];
      out.exactness_gap = out.relaxed_cone_gap;
    }
    out.gap_flag = out.exactness_gap > options.exactness_warn;
  } else {
    out.w = distflow_voltages(net, out.node_power);
    for (int k = 1; k < net.size(); ++k) {
      if (out.w[k] < net.v_lo[k] - 1e-9 || out.w[k] > net.v_hi[k] + 1e-9) {
        throw InfeasibleError("allocation violates voltage bounds at node " + std::to_string(net.label[k]));
      }
    }
  }
  for (int i = 1; i < net.size(); ++i) {
    if (out.node_power[i] > net.m_cap[i] + 1e-9) throw InfeasibleError("allocation violates node cap");
  }
  return out;
}

}  // namespace detail

namespace {

Allocation solve_allocation(const Network& net, const ClassTable& classes, const StateZ& state, bool ac,
                            const AllocatorOptions& options) {
  std::vector<LoadVar> vars = active_vars(net, classes, state);
  auto objective = [&](int a, double p, double& g, double& h) {
    if (!(p > 0)) return false;
    const Utility& u = classes.utility[vars[a].node][vars[a].type];
    g = vars[a].coef * utility_d1(u, p);
    h = vars[a].coef * utility_d2(u, p);
    return true;
  };
  return detail::solve_opf(net, classes.type_count, vars, ac, objective, options);
}

}  // namespace

StateZ make_state(const Network& net, const NodeTypeMatrix& z) {
  if (static_cast<int>(z.size()) != net.size()) throw ParameterError("state rows must match network size");
  return StateZ{z, z};
}

Allocation allocate_distflow(const Network& net, const ClassTable& classes, const StateZ& state,
                             const AllocatorOptions& options) {
  return solve_allocation(net, classes, state, false, options);
}

Allocation allocate_ac(const Network& net, const ClassTable& classes, const StateZ& state,
                       const AllocatorOptions& options) {
  return solve_allocation(net, classes, state, true, options);
}

Allocation fairness_closed_form(const Network& net, const ClassTable& classes, const StateZ& state) {
  if (!is_line(net)) throw UnsupportedError("fairness_closed_form: network is not a line");
  const int J = classes.type_count;
  Allocation out = empty_allocation(net, J);
  // Deepest node of the line carries the binding voltage constraint.
  int deepest = net.order.back();
  double d = delta(net, deepest);
  double denom = 0.0;
  for (int i = 1; i < net.size(); ++i) {
    for (int j = 0; j < J; ++j) {
      if (classes.utility[i][j].form != UtilityForm::kLog) {
        throw PreconditionError("fairness_closed_form: requires log utilities");
      }
      denom += classes.utility[i][j].weight * state.z[i][j];
    }
  }
  if (!(denom > 0)) return out;
  for (int i = 1; i < net.size(); ++i) {
    for (int j = 0; j < J; ++j) {
      if (!(state.z[i][j] > 0)) continue;
      double p = classes.utility[i][j].weight * d / (net.paths.cum_r[i] * denom);
      if (p > classes.c_max[j]) {
        throw PreconditionError("fairness_closed_form: rate " + std::to_string(p) + " exceeds c_max");
      }
      out.p[i][j] = p;
      out.lam[i][j] = state.z[i][j] * p;
      out.node_power[i] += out.lam[i][j];
    }
    if (out.node_power[i] > net.m_cap[i]) throw PreconditionError("fairness_closed_form: node cap binds");
  }
  out.h_volt_lo[deepest] = 0.5 * denom / d;
  out.w = distflow_voltages(net, out.node_power);
  return out;
}

std::vector<double> unit_fairness_rates(const Network& net, const std::vector<double>& z) {
  if (!is_line(net)) throw UnsupportedError("unit_fairness_rates: network is not a line");
  double d = delta(net, net.order.back());
  double total = 0.0;
  for (int i = 1; i < net.size(); ++i) total += z.at(i);
  std::vector<double> p(net.size(), 0.0);
  if (!(total > 0)) return p;
  for (int i = 1; i < net.size(); ++i) {
    if (z[i] > 0) p[i] = d / (net.paths.cum_r[i] * total);
  }
  return p;
}

BalanceReport balance_check(const Network& net, const std::vector<std::vector<double>>& states, double rel_tol) {
  BalanceReport rep;
  // Rates for a would-be class: evaluate p_i as if z_i > 0.
  auto rate = [&](const std::vector<double>& z, int i) {
    double d = delta(net, net.order.back());
    double total = 0.0;
    for (int m = 1; m < net.size(); ++m) total += z[m];
    return d / (net.paths.cum_r[i] * total);
  };
  for (const auto& z : states) {
    for (int i = 1; i < net.size(); ++i) {
      for (int k = 1; k < net.size(); ++k) {
        auto zk = z;
        zk[k] += 1.0;
        auto zi = z;
        zi[i] += 1.0;
        double lhs = rate(zk, i) * rate(z, k);
        double rhs = rate(z, i) * rate(zi, k);
        double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
        ++rep.checked;
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        if (rel > rel_tol) ++rep.violations;
      }
    }
  }
  return rep;
}

double distflow_kkt_residual(const Network& net, const ClassTable& classes, const StateZ& state,
                             const Allocation& alloc) {
  auto shared = shared_resistance(net);
  double worst = 0.0;
  for (int i = 1; i < net.size(); ++i) {
    for (int j = 0; j < classes.type_count; ++j) {
      double z = state.z[i][j];
      if (!(z > 0)) continue;
      double p = alloc.p[i][j];
      double r = z * utility_d1(classes.utility[i][j], p);
      for (int k = 1; k < net.size(); ++k) r -= 2.0 * shared[k][i] * z * alloc.h_volt_lo[k];
      r -= alloc.h_node[i] * z;
      r -= alloc.h_cap[i][j];
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

LoadModel parse_load_model(const std::string& name) {
  if (name == "distflow") return LoadModel::kDistflow;
  if (name == "ac") return LoadModel::kAc;
  if (name == "closed-form") return LoadModel::kClosedForm;
  throw ParameterError("unknown load model '" + name + "' (distflow|ac|closed-form)");
}

std::string to_string(LoadModel model) {
  switch (model) {
    case LoadModel::kDistflow:
      return "distflow";
    case LoadModel::kAc:
      return "ac";
    case LoadModel::kClosedForm:
      return "closed-form";
  }
  return "?";
}

Allocation allocate(LoadModel model, const Network& net, const ClassTable& classes, const StateZ& state,
                    const AllocatorOptions& options) {
  switch (model) {
    case LoadModel::kDistflow:
      return allocate_distflow(net, classes, state, options);
    case LoadModel::kAc:
      return allocate_ac(net, classes, state, options);
    case LoadModel::kClosedForm:
      return fairness_closed_form(net, classes, state);
  }
  throw ParameterError("unknown load model");
}

}  // namespace evgrid
