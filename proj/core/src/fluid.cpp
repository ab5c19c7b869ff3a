#include "evgrid/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "evgrid/errors.hpp"
#include "opf_solve.hpp"

namespace evgrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double sup_diff(const std::vector<NodeTypeMatrix>& a, const std::vector<NodeTypeMatrix>& b) {
  double d = 0.0;
  for (size_t n = 0; n < a.size(); ++n) {
    for (size_t i = 1; i < a[n].size(); ++i) {
      for (size_t j = 0; j < a[n][i].size(); ++j) d = std::max(d, std::abs(a[n][i][j] - b[n][i][j]));
    }
  }
  return d;
}

// Gamma factor that holds q_i at K_i: sum_j lambda_ij E[D_j] phi = K_i.
double reflect_factor(const Network& net, const ClassTable& classes, int i) {
  double offered = 0.0;
  for (int j = 0; j < classes.type_count; ++j) offered += classes.lambda[i][j] * mean_d(classes.joint[j]);
  if (!(offered > 0)) return 1.0;
  return std::min(1.0, net.k_spaces[i] / offered);
}

// int_a^b f by adaptive Gauss-Kronrod with orientation.
template <class F>
double integrate(F f, double a, double b) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  double err = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12, &err);
  return sign * v;
}

bool is_line_with_fairness_weights(const Network& net, const ClassTable& classes) {
  if (!is_line(net)) return false;
  for (int i = 1; i < net.size(); ++i) {
    const Utility& u = classes.utility[i][0];
    if (u.form != UtilityForm::kLog) return false;
    if (std::abs(u.weight - net.paths.cum_r[i]) > 1e-12 * net.paths.cum_r[i]) return false;
  }
  return true;
}

}  // namespace

FluidTrajectory picard_solve(const Network& net, const ClassTable& classes, const StateZ& init, double horizon,
                             const PicardOptions& options) {
  validate(net, classes);
  const int I = net.size();
  const int J = classes.type_count;
  double dt = options.dt;
  if (dt == 0.0) {
    double md = kInf;
    for (const auto& j : classes.joint) md = std::min(md, mean_d(j));
    dt = md / 200.0;
  }
  if (!(dt > 0) || !(horizon >= 0)) throw PreconditionError("picard_solve needs dt > 0 and horizon >= 0");
  const double steps_real = horizon / dt;
  const auto N = static_cast<long>(std::llround(steps_real));
  if (std::abs(steps_real - static_cast<double>(N)) > 1e-9 * std::max(1.0, steps_real)) {
    throw PreconditionError("horizon must be a multiple of dt");
  }
  std::vector<JointBD> joint0 = options.initial_joint.empty() ? classes.joint : options.initial_joint;
  if (static_cast<int>(joint0.size()) != J) throw ParameterError("initial_joint must have one law per type");
  for (int i = 1; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      if (!(init.z[i][j] >= 0) || init.q[i][j] < init.z[i][j]) throw ParameterError("initial state needs 0 <= z <= q");
    }
  }

  FluidTrajectory traj;
  traj.t.resize(N + 1);
  for (long n = 0; n <= N; ++n) traj.t[n] = static_cast<double>(n) * dt;

  // Parking-time tails by lag.
  std::vector<std::vector<double>> ptail(J, std::vector<double>(N + 1));
  std::vector<std::vector<double>> ptail0(J, std::vector<double>(N + 1));
  for (int j = 0; j < J; ++j) {
    for (long m = 0; m <= N; ++m) {
      ptail[j][m] = parking_tail(classes.joint[j], traj.t[m]);
      ptail0[j][m] = parking_tail(joint0[j], traj.t[m]);
    }
  }
  std::vector<double> reflect(I, 1.0);
  for (int i = 1; i < I; ++i) reflect[i] = reflect_factor(net, classes, i);

  // Classes that receive arrivals keep a tiny floor so that rates are the
  // limit along z_ij -> 0+.
  auto floored = [&](const NodeTypeMatrix& z) {
    NodeTypeMatrix zf = z;
    double total = 0.0;
    for (int i = 1; i < I; ++i) {
      for (int j = 0; j < J; ++j) total += z[i][j];
    }
    double floor = 1e-9 * std::max(1.0, total);
    for (int i = 1; i < I; ++i) {
      for (int j = 0; j < J; ++j) {
        if (classes.lambda[i][j] > 0 || z[i][j] > 0) zf[i][j] = std::max(z[i][j], floor);
      }
    }
    return zf;
  };
  auto rates = [&](const NodeTypeMatrix& zf) {
    StateZ st{zf, zf};
    return allocate(options.model, net, classes, st, options.allocator).p;
  };
  // Service from offset u0 to the end of a step: int p du with p = lam / z,
  // lam = z p and z both linear on the step. Exact for rates that blow up
  // like 1/z near z = 0.
  auto partial_service = [&](double z0, double z1, double p0, double p1, double u0) {
    double lo = std::min(z0, z1);
    double a = z0 * p0;
    double b = (z1 * p1 - a) / dt;
    double d = (z1 - z0) / dt;
    if (!(lo > 0) || std::abs(z1 - z0) <= 1e-4 * lo) {
      double pu = p0 + (p1 - p0) * u0 / dt;
      return 0.5 * (dt - u0) * (pu + p1);
    }
    double zu = z0 + d * u0;
    return (b / d) * (dt - u0) + (a * d - b * z0) / (d * d) * std::log(z1 / zu);
  };
  auto step_service = [&](double z0, double z1, double p0, double p1) {
    return partial_service(z0, z1, p0, p1, 0.0);
  };
  boost::math::quadrature::tanh_sinh<double> ts(8);

  std::vector<NodeTypeMatrix> prev_z;
  std::vector<NodeTypeMatrix> prev_p;
  const auto w_end = [&](long k, long n) { return (k == 0 || k == n) ? 0.5 * dt : dt; };

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    std::vector<NodeTypeMatrix> z(N + 1, zeros_like(net, J));
    std::vector<NodeTypeMatrix> q(N + 1, zeros_like(net, J));
    std::vector<NodeTypeMatrix> gam(N + 1, zeros_like(net, J));
    std::vector<NodeTypeMatrix> cum(N + 1, zeros_like(net, J));
    std::vector<NodeTypeMatrix> p(N + 1);
    std::vector<NodeTypeMatrix> zf(N + 1);

    for (long n = 0; n <= N; ++n) {
      // q(t_n) and gamma(t_n).
      for (int i = 1; i < I; ++i) {
        double phi = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
          double qi = 0.0;
          for (int j = 0; j < J; ++j) {
            gam[n][i][j] = classes.lambda[i][j] * phi;
            double v = init.q[i][j] * ptail0[j][n];
            for (long k = 0; n > 0 && k <= n; ++k) v += w_end(k, n) * gam[k][i][j] * ptail[j][n - k];
            q[n][i][j] = v;
            qi += v;
          }
          if (qi < net.k_spaces[i] - 1e-12 || reflect[i] >= 1.0 || pass == 1) break;
          phi = reflect[i];
        }
      }
      // z(t_n) with the implicit endpoint rate.
      if (n == 0) {
        z[0] = init.z;
        zf[0] = floored(z[0]);
        p[0] = rates(zf[0]);
        continue;
      }
      NodeTypeMatrix pn = prev_p.empty() ? p[n - 1] : prev_p[n];
      NodeTypeMatrix zfn = prev_z.empty() ? zf[n - 1] : floored(prev_z[n]);
      for (int local = 0; local < 50; ++local) {
        for (int i = 1; i < I; ++i) {
          for (int j = 0; j < J; ++j) {
            double cn = cum[n - 1][i][j] + step_service(zf[n - 1][i][j], zfn[i][j], p[n - 1][i][j], pn[i][j]);
            cum[n][i][j] = cn;
            double v = init.z[i][j] > 0 ? init.z[i][j] * joint_tail(joint0[j], cn, traj.t[n]) : 0.0;
            if (classes.lambda[i][j] > 0) {
              const JointBD& law = classes.joint[j];
              std::vector<double> f(n + 1);
              for (long k = 0; k <= n; ++k) {
                double g = gam[k][i][j];
                f[k] = g == 0 ? 0.0 : g * joint_tail(law, cn - cum[k][i][j], traj.t[n] - traj.t[k]);
                v += w_end(k, n) * f[k];
              }
              // Steps with large service: the survival factor is far from
              // linear in s, integrate it with the exact in-step service.
              for (long k = 0; k < n; ++k) {
                double zk = zf[k][i][j], pk = p[k][i][j];
                double zk1 = k + 1 == n ? zfn[i][j] : zf[k + 1][i][j];
                double pk1 = k + 1 == n ? pn[i][j] : p[k + 1][i][j];
                double step = (k + 1 == n ? cn : cum[k + 1][i][j]) - cum[k][i][j];
                if (!(step > 0.02)) continue;
                double rest = cn - (k + 1 == n ? cn : cum[k + 1][i][j]);
                double g0 = gam[k][i][j], g1 = gam[k + 1][i][j];
                auto integrand = [&](double u) {
                  double sv = rest + partial_service(zk, zk1, pk, pk1, u);
                  double g = g0 + (g1 - g0) * u / dt;
                  return g * joint_tail(law, sv, traj.t[n] - traj.t[k] - u);
                };
                double exact = ts.integrate(integrand, 0.0, dt);
                v += exact - 0.5 * dt * (f[k] + f[k + 1]);
              }
            }
            z[n][i][j] = std::min(v, q[n][i][j]);
          }
        }
        zfn = floored(z[n]);
        NodeTypeMatrix pnew = rates(zfn);
        double change = 0.0;
        double mag = 0.0;
        for (int i = 1; i < I; ++i) {
          for (int j = 0; j < J; ++j) {
            change = std::max(change, std::abs(pnew[i][j] - pn[i][j]));
            mag = std::max(mag, std::abs(pnew[i][j]));
          }
        }
        pn = pnew;
        if (change <= 1e-11 * std::max(1.0, mag)) break;
      }
      p[n] = pn;
      zf[n] = zfn;
    }

    double change = prev_z.empty() ? kInf : sup_diff(z, prev_z);
    traj.iterations = iter;
    traj.last_change = change;
    prev_z = z;
    prev_p = p;
    if (change < options.tol) {
      traj.z = std::move(z);
      traj.q = std::move(q);
      traj.gamma = std::move(gam);
      traj.service = std::move(cum);
      return traj;
    }
  }
  throw ConvergenceError("picard_solve did not converge in " + std::to_string(options.max_iter) + " iterations",
                         traj.last_change);
}

InvariantPoint invariant_solve(const Network& net, const ClassTable& classes, LoadModel model,
                               const InvariantOptions& options) {
  validate(net, classes);
  if (model == LoadModel::kClosedForm) throw UnsupportedError("invariant_solve supports distflow and ac");
  const int I = net.size();
  const int J = classes.type_count;

  InvariantPoint out;
  for (int j = 0; j < J; ++j) {
    bool ok = inf_d_over_b(classes.joint[j]) <= 1.0 / classes.c_max[j] + 1e-15;
    bool ratio_family = !std::holds_alternative<IndependentExp>(classes.joint[j]) &&
                        !std::holds_alternative<Empirical>(classes.joint[j]);
    if (!ok && !ratio_family) {
      throw PreconditionError("support condition inf(D/B) <= 1/c_max fails for type " + std::to_string(j));
    }
    out.support_condition_ok = out.support_condition_ok && ok;
  }

  out.gamma = gamma_effective(net, classes, options.gamma);
  std::vector<detail::LoadVar> vars;
  for (int i = 1; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      double g = out.gamma[i][j];
      if (g > 0) vars.push_back({i, j, 1.0, g_value(g, classes.joint[j], classes.c_max[j])});
    }
  }
  auto objective = [&](int a, double lam, double& grad, double& hess) {
    if (!(lam > 0)) return false;
    const auto& v = vars[a];
    const JointBD& joint = classes.joint[v.type];
    double g = out.gamma[v.node][v.type];
    double x = 0.0;
    double gd = 0.0;
    double sup = g_sup(g, joint);
    if (lam >= sup) {
      // Saturated ratio law: g is flat past x_sat, use the left derivative.
      double sat = g_saturation(joint);
      if (lam > sup * (1.0 + 1e-12) || std::isinf(sat)) return false;
      x = sat;
      gd = g_derivative(g, joint, sat * (1.0 - 1e-9));
    } else {
      try {
        x = g_inverse(g, joint, lam);
      } catch (const RangeError&) {
        return false;
      }
      gd = g_derivative(g, joint, x);
    }
    if (!(x > 0) || !(gd > 0)) return false;
    const Utility& u = classes.utility[v.node][v.type];
    grad = utility_d1(u, x);
    hess = utility_d2(u, x) / gd;
    return true;
  };
  Allocation alloc = detail::solve_opf(net, J, vars, model == LoadModel::kAc, objective, options.allocator);

  out.lam_star = alloc.p;
  out.z_star = zeros_like(net, J);
  out.p_star = zeros_like(net, J);
  out.success_prob = zeros_like(net, J);
  out.h_cap = alloc.h_cap;
  out.h_volt_lo = alloc.h_volt_lo;
  out.h_volt_hi = alloc.h_volt_hi;
  out.h_node = alloc.h_node;
  out.kkt_residual = alloc.kkt_residual;
  out.exactness_gap = alloc.exactness_gap;
  for (const auto& v : vars) {
    const JointBD& joint = classes.joint[v.type];
    double g = out.gamma[v.node][v.type];
    double lam = out.lam_star[v.node][v.type];
    double p = v.ub - lam <= 1e-9 * std::max(1.0, v.ub) ? classes.c_max[v.type] : g_inverse(g, joint, lam);
    if (std::isinf(p)) p = lam >= g_sup(g, joint) ? g_saturation(joint) : g_inverse(g, joint, lam);
    out.p_star[v.node][v.type] = p;
    out.z_star[v.node][v.type] = lam / p;
    out.success_prob[v.node][v.type] = success_probability(joint, p);
    out.little_residual = std::max(out.little_residual, std::abs(lam / p - g * expected_sojourn(joint, p)));
    const Utility& u = classes.utility[v.node][v.type];
    out.objective += integrate([&](double x) { return utility_d1(u, x) * g_derivative(g, joint, x); }, 1.0, p);
  }
  return out;
}

FluidTrajectory explicit_markov(const Network& net, const ClassTable& classes, const StateZ& init, double horizon,
                                double dt) {
  validate(net, classes);
  if (classes.type_count != 1) throw UnsupportedError("explicit_markov needs a single type");
  const auto* exp_law = std::get_if<IndependentExp>(&classes.joint[0]);
  if (exp_law == nullptr) throw UnsupportedError("explicit_markov needs independent exponential B and D");
  if (!is_line_with_fairness_weights(net, classes)) {
    throw UnsupportedError("explicit_markov needs a line with log utilities and w = cum_r");
  }
  if (!std::isinf(classes.c_max[0])) throw UnsupportedError("explicit_markov needs unbounded c_max");
  const int I = net.size();
  for (int i = 1; i < I; ++i) {
    if (!std::isinf(net.k_spaces[i]) || !std::isinf(net.m_cap[i])) {
      throw UnsupportedError("explicit_markov needs K = inf and no node caps");
    }
  }
  if (!(dt > 0)) throw PreconditionError("dt must be positive");
  // z(0) = c lambda.
  double c = -1.0;
  for (int i = 1; i < I; ++i) {
    double lam = classes.lambda[i][0];
    if (lam > 0) {
      c = init.z[i][0] / lam;
      break;
    }
  }
  for (int i = 1; i < I; ++i) {
    double lam = classes.lambda[i][0];
    if (std::abs(init.z[i][0] - std::max(c, 0.0) * lam) > 1e-12 * std::max(1.0, init.z[i][0])) {
      throw UnsupportedError("explicit_markov needs z(0) proportional to lambda");
    }
  }

  double delta_deep = kInf;
  double weighted = 0.0;
  for (int i = 1; i < I; ++i) {
    delta_deep = std::min(delta_deep, delta(net, i));
    weighted += net.paths.cum_r[i] * classes.lambda[i][0];
  }
  const double md = exp_law->mean_d;
  const double mb = exp_law->mean_b;
  std::vector<double> z_star(I, 0.0);
  for (int i = 1; i < I; ++i) {
    double lam_star = weighted > 0 ? classes.lambda[i][0] * delta_deep / weighted : 0.0;
    z_star[i] = md * (classes.lambda[i][0] - lam_star / mb);
    if (z_star[i] < 0) throw UnsupportedError("explicit_markov: voltage constraint does not bind (z* < 0)");
  }

  const auto N = static_cast<long>(std::llround(horizon / dt));
  FluidTrajectory traj;
  for (long n = 0; n <= N; ++n) {
    double t = static_cast<double>(n) * dt;
    traj.t.push_back(t);
    NodeTypeMatrix z = zeros_like(net, 1);
    NodeTypeMatrix g = zeros_like(net, 1);
    for (int i = 1; i < I; ++i) {
      z[i][0] = z_star[i] + (init.z[i][0] - z_star[i]) * std::exp(-t / md);
      g[i][0] = classes.lambda[i][0];
    }
    traj.z.push_back(z);
    traj.gamma.push_back(g);
  }
  return traj;
}

double expected_duration_utility(double gamma, const JointBD& joint, const Utility& u, double p) {
  auto ratio_part = [&](const DurationLaw& d, auto h_expect) { return gamma * d.mean * h_expect(); };
  return std::visit(
      Overloaded{
          [&](const IndependentExp& j) {
            // E[D u(min(p, H))] = E[D] u(p) - int_0^p u'(h) E[D 1{H <= h}] dh
            double c = j.mean_d / j.mean_b;
            double tail = integrate(
                [&](double h) {
                  double below = j.mean_d * (1.0 - 1.0 / ((1.0 + c * h) * (1.0 + c * h)));
                  return utility_d1(u, h) * below;
                },
                0.0, p);
            return gamma * (j.mean_d * utility_value(u, p) - tail);
          },
          [&](const DeterministicRatio& j) {
            return ratio_part(j.d, [&] { return utility_value(u, std::min(p, j.theta)); });
          },
          [&](const DiscreteRatio& j) {
            return ratio_part(j.d, [&] {
              double s = 0.0;
              for (size_t k = 0; k < j.thetas.size(); ++k) s += j.probs[k] * utility_value(u, std::min(p, j.thetas[k]));
              return s;
            });
          },
          [&](const ParetoRatio& j) {
            return ratio_part(j.d, [&] {
              auto density = [&](double h) { return j.a * std::pow(j.kappa, j.a) / std::pow(h + j.kappa, j.a + 1.0); };
              boost::math::quadrature::tanh_sinh<double> ts;
              double below = ts.integrate([&](double h) { return utility_value(u, h) * density(h); }, 0.0, p);
              return below + utility_value(u, p) * std::pow(j.kappa / (p + j.kappa), j.a);
            });
          },
          [&](const Empirical& j) {
            double s = 0.0;
            for (const auto& [b, d] : j.samples) s += d * utility_value(u, std::min(p, b / d));
            return gamma * s / static_cast<double>(j.samples.size());
          },
      },
      joint);
}

std::vector<DiagnosticEntry> objective_diagnostic(const InvariantPoint& point, const ClassTable& classes) {
  std::vector<DiagnosticEntry> out;
  for (size_t i = 1; i < point.gamma.size(); ++i) {
    for (int j = 0; j < classes.type_count; ++j) {
      double g = point.gamma[i][j];
      if (!(g > 0)) continue;
      const Utility& u = classes.utility[i][j];
      if (u.form != UtilityForm::kLog) throw PreconditionError("objective_diagnostic needs log utilities");
      const JointBD& joint = classes.joint[j];
      double p = point.p_star[i][j];
      DiagnosticEntry e;
      e.node = static_cast<int>(i);
      e.type = j;
      e.lhs = integrate([&](double x) { return utility_d1(u, x) * g_derivative(g, joint, x); }, 1.0, p);
      e.rhs = expected_duration_utility(g, joint, u, p);
      e.anchor_term = expected_duration_utility(g, joint, u, 1.0);
      e.rel_gap = std::abs(e.lhs - e.rhs) / std::max(std::abs(e.rhs), 1e-300);
      double anchored = e.rhs - e.anchor_term;
      e.rel_gap_anchored = std::abs(e.lhs - anchored) / std::max(std::abs(anchored), 1e-300);
      out.push_back(e);
    }
  }
  return out;
}

StabilityReport stability_check(const Network& net, const ClassTable& classes, const std::vector<StateZ>& inits,
                                double horizon, const PicardOptions& options) {
  for (int i = 1; i < net.size(); ++i) {
    if (!std::isinf(net.k_spaces[i])) throw PreconditionError("stability_check needs K = inf");
  }
  if (options.model != LoadModel::kDistflow && options.model != LoadModel::kClosedForm) {
    throw PreconditionError("stability_check needs a monotone (Distflow) allocator");
  }
  InvariantPoint star = invariant_solve(net, classes, LoadModel::kDistflow);
  StabilityReport rep;
  for (const auto& init : inits) {
    FluidTrajectory tr = picard_solve(net, classes, init, horizon, options);
    std::vector<double> path;
    for (const auto& zt : tr.z) {
      double d = 0.0;
      for (int i = 1; i < net.size(); ++i) {
        for (int j = 0; j < classes.type_count; ++j) d = std::max(d, std::abs(zt[i][j] - star.z_star[i][j]));
      }
      path.push_back(d);
    }
    rep.final_distance.push_back(path.back());
    rep.distance_path.push_back(std::move(path));
  }
  return rep;
}

}  // namespace evgrid
