#include "evgrid/loadflow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

void check_power(const Network& net, const NodePower& lam) {
  if (static_cast<int>(lam.size()) != net.size()) throw ParameterError("node power vector has wrong size");
  for (int k = 1; k < net.size(); ++k) {
    if (!(lam[k] >= 0)) throw ParameterError("node power must be nonnegative");
  }
}

// Subtree powers including losses strictly below k.
void accumulate_subtree(const Network& net, const NodePower& lam, AcSolution& s) {
  for (auto it = net.order.rbegin(); it != net.order.rend(); ++it) {
    int k = *it;
    double p = lam[k];
    double q = 0.0;
    for (int c : net.children[k]) {
      p += s.p_sub[c] + s.loss_p[c];
      q += s.q_sub[c] + s.loss_q[c];
    }
    s.p_sub[k] = p;
    s.q_sub[k] = q;
  }
}

}  // namespace

std::vector<double> distflow_voltages(const Network& net, const NodePower& lam) {
  check_power(net, lam);
  const int n = net.size();
  std::vector<double> sub(n, 0.0);
  for (auto it = net.order.rbegin(); it != net.order.rend(); ++it) {
    int k = *it;
    sub[k] += lam[k];
    sub[net.parent[k]] += sub[k];
  }
  std::vector<double> w(n, net.w00);
  for (int k : net.order) w[k] = w[net.parent[k]] - 2.0 * net.r[k] * sub[k];
  return w;
}

AcSolution ac_solve(const Network& net, const NodePower& lam, const AcOptions& options) {
  check_power(net, lam);
  const int n = net.size();
  AcSolution s;
  s.v.assign(n, std::sqrt(net.w00));
  s.w_pp.assign(n, net.w00);
  s.w_pk.assign(n, net.w00);
  s.w_kk.assign(n, net.w00);
  s.loss_p.assign(n, 0.0);
  s.loss_q.assign(n, 0.0);
  s.p_sub.assign(n, 0.0);
  s.q_sub.assign(n, 0.0);
  s.damping = options.damping;

  double prev_change = INFINITY;
  int rising = 0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    accumulate_subtree(net, lam, s);
    double change = 0.0;
    for (int k : net.order) {
      double vp = s.v[net.parent[k]];
      double c = s.p_sub[k] * net.r[k] + s.q_sub[k] * net.x[k];
      double disc = vp * vp - 4.0 * c;
      if (disc < 0) {
        std::ostringstream os;
        os << "infeasible load: no real voltage at node " << net.label[k] << " (discriminant " << disc << ")";
        throw InfeasibleError(os.str());
      }
      double vk = 0.5 * (vp + std::sqrt(disc));
      change = std::max(change, std::abs(vk - s.v[k]));
      s.v[k] = vk;
    }
    for (int k : net.order) {
      double vp = s.v[net.parent[k]];
      double vk = s.v[k];
      s.w_pp[k] = vp * vp;
      s.w_pk[k] = vp * vk;
      s.w_kk[k] = vk * vk;
      double drop = s.w_pp[k] - 2.0 * s.w_pk[k] + s.w_kk[k];
      double z2 = net.r[k] * net.r[k] + net.x[k] * net.x[k];
      double lp = drop * net.r[k] / z2;
      double lq = drop * net.x[k] / z2;
      s.loss_p[k] = (1.0 - s.damping) * s.loss_p[k] + s.damping * lp;
      s.loss_q[k] = (1.0 - s.damping) * s.loss_q[k] + s.damping * lq;
    }
    s.iterations = iter;
    if (change < options.tol) {
      accumulate_subtree(net, lam, s);
      s.converged = true;
      return s;
    }
    rising = change > prev_change ? rising + 1 : 0;
    if (rising >= 3 && s.damping != options.fallback_damping) {
      s.damping = options.fallback_damping;
      rising = 0;
    }
    prev_change = change;
  }
  throw ConvergenceError("ac_solve: no convergence within " + std::to_string(options.max_iter) + " iterations",
                         prev_change);
}

double kvl_residual(const Network& net, const AcSolution& sol) {
  double r = 0.0;
  for (int k : net.order) {
    r = std::max(r, std::abs(sol.w_pk[k] - sol.w_kk[k] - sol.p_sub[k] * net.r[k] - sol.q_sub[k] * net.x[k]));
  }
  return r;
}

double energy_balance_residual(const Network& net, const NodePower& lam, const AcSolution& sol) {
  double injected = 0.0;
  for (int c : net.children[0]) injected += sol.p_sub[c] + sol.loss_p[c];
  double consumed = 0.0;
  for (int k = 1; k < net.size(); ++k) consumed += lam[k] + sol.loss_p[k];
  return injected - consumed;
}

DominationReport check_domination(const Network& net, const NodePower& lam, const AcOptions& options) {
  DominationReport rep;
  rep.w_lin = distflow_voltages(net, lam);
  AcSolution ac = ac_solve(net, lam, options);
  rep.w_ac = ac.w_kk;
  rep.w_ac[0] = net.w00;
  rep.gap.assign(net.size(), 0.0);
  std::ostringstream diag;
  for (int k = 1; k < net.size(); ++k) {
    rep.gap[k] = rep.w_lin[k] - rep.w_ac[k];
    bool bad_ac = rep.w_ac[k] > rep.w_lin[k] + 1e-9;
    bool bad_lin = rep.w_lin[k] > net.w00 + 1e-15;
    if (bad_ac || bad_lin) {
      rep.violations.push_back(k);
      diag << "node " << net.label[k] << ": w_ac=" << rep.w_ac[k] << " w_lin=" << rep.w_lin[k] << "\n";
    }
  }
  rep.ok = rep.violations.empty();
  rep.diagnostic = diag.str();
  return rep;
}

}  // namespace evgrid
