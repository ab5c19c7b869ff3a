#include "opf_program.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evgrid/errors.hpp"
#include "evgrid/loadflow.hpp"

namespace evgrid::detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

OpfProgram build_opf(const Network& net, const std::vector<LoadVar>& vars, bool ac) {
  OpfProgram prog;
  prog.ac = ac;
  prog.n_load = static_cast<int>(vars.size());
  const int n_nodes = net.size();
  int n = prog.n_load;
  prog.wkk.assign(n_nodes, -1);
  prog.wpk.assign(n_nodes, -1);
  if (ac) {
    for (int k = 1; k < n_nodes; ++k) {
      prog.wkk[k] = n++;
      prog.wpk[k] = n++;
    }
  }
  BarrierProblem& p = prog.problem;
  p.n = n;
  auto add = [&](LinearRow row, RowKind kind, int node, int var) {
    p.rows.push_back(std::move(row));
    prog.tags.push_back({kind, node, var});
  };

  for (int a = 0; a < prog.n_load; ++a) {
    add({{{a, -1.0}}, 0.0}, RowKind::kNonneg, vars[a].node, a);
    if (std::isfinite(vars[a].ub)) add({{{a, 1.0}}, vars[a].ub}, RowKind::kUpper, vars[a].node, a);
  }
  for (int i = 1; i < n_nodes; ++i) {
    if (!std::isfinite(net.m_cap[i])) continue;
    LinearRow row;
    row.rhs = net.m_cap[i];
    for (int a = 0; a < prog.n_load; ++a) {
      if (vars[a].node == i) row.coef.push_back({a, vars[a].coef});
    }
    if (!row.coef.empty()) add(std::move(row), RowKind::kNodeCap, i, -1);
  }

  if (!ac) {
    auto shared = shared_resistance(net);
    for (int k = 1; k < n_nodes; ++k) {
      LinearRow row;
      row.rhs = delta(net, k);
      for (int a = 0; a < prog.n_load; ++a) {
        double c = shared[k][vars[a].node];
        if (c > 0) row.coef.push_back({a, c * vars[a].coef});
      }
      if (!row.coef.empty()) add(std::move(row), RowKind::kVoltLo, k, -1);
    }
    return prog;
  }

  for (int k = 1; k < n_nodes; ++k) {
    add({{{prog.wkk[k], -1.0}}, -net.v_lo[k]}, RowKind::kVoltLo, k, -1);
    add({{{prog.wkk[k], 1.0}}, net.v_hi[k]}, RowKind::kVoltHi, k, -1);
    add({{{prog.wpk[k], -1.0}}, 0.0}, RowKind::kFlowNonneg, k, -1);
    ConeRow cone;
    int par = net.parent[k];
    if (par == 0) {
      cone.a = -1;
      cone.a_value = net.w00;
    } else {
      cone.a = prog.wkk[par];
    }
    cone.b = prog.wkk[k];
    cone.c = prog.wpk[k];
    p.cones.push_back(cone);
  }

  // Branch equations: W_pk - W_kk - R P_N(k) - X Q_N(k) = 0, with P_N, Q_N
  // carrying the losses of the edges strictly below k.
  p.eq_a = MatrixXd::Zero(net.node_count, n);
  p.eq_b = VectorXd::Zero(net.node_count);
  for (int k = 1; k < n_nodes; ++k) {
    int row = k - 1;
    p.eq_a(row, prog.wpk[k]) += 1.0;
    p.eq_a(row, prog.wkk[k]) -= 1.0;
    const auto& sub = net.paths.subtree_nodes[k];
    for (int a = 0; a < prog.n_load; ++a) {
      if (std::find(sub.begin(), sub.end(), vars[a].node) != sub.end()) {
        p.eq_a(row, a) -= net.r[k] * vars[a].coef;
      }
    }
    for (int e : sub) {
      if (e == k) continue;
      double z2 = net.r[e] * net.r[e] + net.x[e] * net.x[e];
      double c = (net.r[k] * net.r[e] + net.x[k] * net.x[e]) / z2;
      // loss(e) = (W_pp - 2 W_pk + W_kk) * (R_e or X_e) / |z_e|^2
      p.eq_a(row, prog.wkk[net.parent[e]]) -= c;
      p.eq_a(row, prog.wpk[e]) += 2.0 * c;
      p.eq_a(row, prog.wkk[e]) -= c;
    }
  }
  return prog;
}

std::vector<double> node_power_of(const Network& net, const std::vector<LoadVar>& vars, const VectorXd& x) {
  std::vector<double> lam(net.size(), 0.0);
  for (size_t a = 0; a < vars.size(); ++a) lam[vars[a].node] += vars[a].coef * x[static_cast<Eigen::Index>(a)];
  return lam;
}

namespace {

bool interior_sweep(const Network& net, const std::vector<double>& lam, double theta, std::vector<double>& wkk,
                    std::vector<double>& wpk) {
  const int n = net.size();
  std::vector<double> loss(n, 0.0), p_sub(n), q_sub(n);
  wkk.assign(n, 0.0);
  wpk.assign(n, 0.0);
  for (int it = 0; it < 500; ++it) {
    for (int k = 1; k < n; ++k) {
      p_sub[k] = lam[k];
      q_sub[k] = 0.0;
    }
    for (int k = n - 1; k >= 1; --k) {
      int par = net.parent[k];
      if (par == 0) continue;
      p_sub[par] += p_sub[k] + net.r[k] * loss[k];
      q_sub[par] += q_sub[k] + net.x[k] * loss[k];
    }
    double change = 0.0;
    for (int k = 1; k < n; ++k) {
      int par = net.parent[k];
      double wpp = par == 0 ? net.w00 : wkk[par];
      double vp = std::sqrt(wpp);
      double b = net.r[k] * p_sub[k] + net.x[k] * q_sub[k];
      double disc = (1.0 - theta) * (1.0 - theta) * wpp - 4.0 * b;
      if (!(disc > 0)) return false;
      double vk = ((1.0 - theta) * vp + std::sqrt(disc)) / 2.0;
      wkk[k] = vk * vk;
      wpk[k] = (1.0 - theta) * vp * vk;
      double z2 = net.r[k] * net.r[k] + net.x[k] * net.x[k];
      double l = (wpp - 2.0 * wpk[k] + wkk[k]) / z2;
      change = std::max(change, std::abs(l - loss[k]));
      loss[k] = l;
    }
    if (change < 1e-15 * std::max(1.0, *std::max_element(loss.begin(), loss.end()))) return true;
  }
  return false;
}

bool strictly_feasible(const BarrierProblem& p, const VectorXd& y) {
  for (const auto& row : p.rows) {
    double s = row.rhs;
    for (const auto& [k, v] : row.coef) s -= v * y[k];
    if (!(s > 0)) return false;
  }
  for (const auto& cone : p.cones) {
    double av = cone.a >= 0 ? y[cone.a] : cone.a_value;
    if (!(av * y[cone.b] - y[cone.c] * y[cone.c] > 0)) return false;
  }
  return true;
}

}  // namespace

VectorXd opf_start(const Network& net, const std::vector<LoadVar>& vars, const OpfProgram& prog) {
  const int n_nodes = net.size();
  double delta_min = std::numeric_limits<double>::infinity();
  for (int k = 1; k < n_nodes; ++k) delta_min = std::min(delta_min, delta(net, k));
  if (!(delta_min > 0)) throw InfeasibleError("no voltage headroom: v_lo equals w00 at some node");
  double total_coef = 0.0;
  std::vector<int> per_node(n_nodes, 0);
  for (const auto& v : vars) {
    total_coef += v.coef;
    ++per_node[v.node];
  }
  VectorXd x = VectorXd::Zero(prog.problem.n);
  for (int a = 0; a < prog.n_load; ++a) {
    const LoadVar& v = vars[a];
    double val = delta_min / (2.0 * net.paths.cum_r[v.node] * total_coef);
    if (std::isfinite(v.ub)) val = std::min(val, 0.5 * v.ub);
    if (std::isfinite(net.m_cap[v.node])) val = std::min(val, net.m_cap[v.node] / (2.0 * per_node[v.node] * v.coef));
    x[a] = val;
  }
  if (!prog.ac) return x;

  // Complete W by a load-flow sweep in which every branch sits strictly
  // inside its cone: W_pk = (1 - theta) sqrt(W_pp W_kk).
  for (double shrink : {1.0, 0.5, 0.1, 0.01}) {
    VectorXd y = x;
    y.head(prog.n_load) *= shrink;
    std::vector<double> lam = node_power_of(net, vars, y.head(prog.n_load));
    for (double theta : {1e-3, 1e-4, 1e-2, 1e-5}) {
      std::vector<double> wkk, wpk;
      if (!interior_sweep(net, lam, theta, wkk, wpk)) continue;
      for (int k = 1; k < n_nodes; ++k) {
        y[prog.wkk[k]] = wkk[k];
        y[prog.wpk[k]] = wpk[k];
      }
      if (strictly_feasible(prog.problem, y)) return y;
    }
  }
  throw InfeasibleError("could not construct a strictly feasible AC starting point");
}

double exactness_gap(const Network& net, const OpfProgram& prog, const VectorXd& x) {
  double gap = 0.0;
  for (int k = 1; k < net.size(); ++k) {
    int par = net.parent[k];
    double wpp = par == 0 ? net.w00 : x[prog.wkk[par]];
    double wkk = x[prog.wkk[k]];
    double wpk = x[prog.wpk[k]];
    gap = std::max(gap, (wpp * wkk - wpk * wpk) / (wpp * wkk));
  }
  return gap;
}

}  // namespace evgrid::detail
