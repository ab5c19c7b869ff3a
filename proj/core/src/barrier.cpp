#include "evgrid/barrier.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Gauss-Legendre nodes/weights on [0, 1].
constexpr std::array<double, 5> kGlNode{0.04691007703066800, 0.23076534494715845, 0.5,
                                        0.76923465505284155, 0.95308992296933200};
constexpr std::array<double, 5> kGlWeight{0.11846344252809454, 0.23931433524968324, 0.28444444444444444,
                                          0.23931433524968324, 0.11846344252809454};

class Centering {
 public:
  Centering(const BarrierProblem& p) : p_(p), grad_f_(p.n), hess_f_(p.n) {}

  // Slacks; false if any is nonpositive or the objective is out of domain.
  bool feasible(const VectorXd& x) {
    for (const auto& row : p_.rows) {
      if (!(row_slack(row, x) > 0)) return false;
    }
    for (const auto& cone : p_.cones) {
      if (!(cone_value(cone, x) > 0)) return false;
      if (!(a_of(cone, x) > 0) || !(x[cone.b] > 0)) return false;
    }
    return p_.objective(x, grad_f_, hess_f_);
  }

  // Gradient of F = -f - mu * sum log(slack); assumes feasible(x) just ran.
  VectorXd gradient(const VectorXd& x, double mu) {
    VectorXd g = -grad_f_;
    for (const auto& row : p_.rows) {
      double s = row_slack(row, x);
      for (const auto& [k, a] : row.coef) g[k] += mu * a / s;
    }
    for (const auto& cone : p_.cones) {
      double c = cone_value(cone, x);
      if (cone.a >= 0) g[cone.a] -= mu * x[cone.b] / c;
      g[cone.b] -= mu * a_of(cone, x) / c;
      g[cone.c] -= mu * (-2.0 * x[cone.c]) / c;
    }
    return g;
  }

  MatrixXd hessian(const VectorXd& x, double mu) {
    MatrixXd h = MatrixXd::Zero(p_.n, p_.n);
    h.diagonal() = -hess_f_;
    for (const auto& row : p_.rows) {
      double s = row_slack(row, x);
      double w = mu / (s * s);
      for (const auto& [k, a] : row.coef) {
        for (const auto& [l, b] : row.coef) h(k, l) += w * a * b;
      }
    }
    for (const auto& cone : p_.cones) {
      double c = cone_value(cone, x);
      std::array<int, 3> idx{cone.a, cone.b, cone.c};
      std::array<double, 3> dc{x[cone.b], a_of(cone, x), -2.0 * x[cone.c]};
      for (int u = 0; u < 3; ++u) {
        if (idx[u] < 0) continue;
        for (int v = 0; v < 3; ++v) {
          if (idx[v] < 0) continue;
          h(idx[u], idx[v]) += mu * dc[u] * dc[v] / (c * c);
        }
      }
      if (cone.a >= 0) {
        h(cone.a, cone.b) -= mu / c;
        h(cone.b, cone.a) -= mu / c;
      }
      h(cone.c, cone.c) -= mu * (-2.0) / c;
    }
    return h;
  }

  const VectorXd& grad_f() const { return grad_f_; }

  static double row_slack(const LinearRow& row, const VectorXd& x) {
    double s = row.rhs;
    for (const auto& [k, a] : row.coef) s -= a * x[k];
    return s;
  }
  static double a_of(const ConeRow& cone, const VectorXd& x) { return cone.a >= 0 ? x[cone.a] : cone.a_value; }
  static double cone_value(const ConeRow& cone, const VectorXd& x) {
    return a_of(cone, x) * x[cone.b] - x[cone.c] * x[cone.c];
  }

 private:
  const BarrierProblem& p_;
  VectorXd grad_f_;
  VectorXd hess_f_;
};


// Active-set Newton on the KKT system, started from the barrier point.
// Returns false (leaving `res` untouched) if the active set is not confirmed.
bool polish(const BarrierProblem& p, BarrierResult& res) {
  const int n = p.n;
  std::vector<int> act_rows;
  std::vector<int> act_cones;
  for (size_t r = 0; r < p.rows.size(); ++r) {
    double scale = std::max(1.0, std::abs(p.rows[r].rhs));
    if (res.row_slack[static_cast<Eigen::Index>(r)] < 1e-6 * scale) act_rows.push_back(static_cast<int>(r));
  }
  for (size_t c = 0; c < p.cones.size(); ++c) {
    if (res.cone_slack[static_cast<Eigen::Index>(c)] < 1e-6) act_cones.push_back(static_cast<int>(c));
  }
  const int na = static_cast<int>(act_rows.size());
  const int nc = static_cast<int>(act_cones.size());
  const auto ne = static_cast<int>(p.eq_a.rows());
  const int dim = n + na + nc + ne;

  VectorXd x = res.x;
  VectorXd grad(n), hdiag(n);
  VectorXd h = VectorXd::Zero(na), nu = VectorXd::Zero(nc), eta = VectorXd::Zero(ne);
  for (int k = 0; k < na; ++k) h[k] = res.row_mult[act_rows[k]];
  for (int k = 0; k < nc; ++k) nu[k] = res.cone_mult[act_cones[k]];

  auto cone_grad = [&](const ConeRow& cr, const VectorXd& xv) {
    VectorXd g = VectorXd::Zero(n);
    if (cr.a >= 0) g[cr.a] += xv[cr.b];
    g[cr.b] += Centering::a_of(cr, xv);
    g[cr.c] += -2.0 * xv[cr.c];
    return g;
  };

  double resid = INFINITY;
  for (int iter = 0; iter < 30; ++iter) {
    if (!p.objective(x, grad, hdiag)) return false;
    MatrixXd K = MatrixXd::Zero(dim, dim);
    VectorXd rhs = VectorXd::Zero(dim);
    K.topLeftCorner(n, n).diagonal() = hdiag;
    for (int k = 0; k < nc; ++k) {
      const ConeRow& cr = p.cones[act_cones[k]];
      if (cr.a >= 0) {
        K(cr.a, cr.b) += nu[k];
        K(cr.b, cr.a) += nu[k];
      }
      K(cr.c, cr.c) += -2.0 * nu[k];
    }
    // Stationarity residual at the current point and multipliers.
    VectorXd stat = grad;
    for (int k = 0; k < na; ++k) {
      for (const auto& [j, a] : p.rows[act_rows[k]].coef) {
        K(j, n + k) -= a;
        K(n + k, j) += a;
        stat[j] -= h[k] * a;
      }
      rhs[n + k] = Centering::row_slack(p.rows[act_rows[k]], x);
    }
    for (int k = 0; k < nc; ++k) {
      const ConeRow& cr = p.cones[act_cones[k]];
      VectorXd g = cone_grad(cr, x);
      K.block(0, n + na + k, n, 1) = g;
      K.block(n + na + k, 0, 1, n) = g.transpose();
      stat += nu[k] * g;
      rhs[n + na + k] = -Centering::cone_value(cr, x);
    }
    if (ne > 0) {
      K.block(0, n + na + nc, n, ne) = -p.eq_a.transpose();
      K.block(n + na + nc, 0, ne, n) = p.eq_a;
      stat -= p.eq_a.transpose() * eta;
      rhs.tail(ne) = p.eq_b - p.eq_a * x;
    }
    rhs.head(n) = -stat;
    resid = rhs.cwiseAbs().maxCoeff();
    if (resid < 1e-13) break;
    // Unknowns: dx and the multiplier increments.
    VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);
    if (!sol.allFinite()) return false;
    x += sol.head(n);
    h += sol.segment(n, na);
    nu += sol.segment(n + na, nc);
    eta += sol.segment(n + na + nc, ne);
  }
  if (resid > 1e-10) return false;
  // Degenerate active sets leave the multipliers non-unique; drop the most
  // negative one and refit the rest by least squares at fixed x.
  {
    if (!p.objective(x, grad, hdiag)) return false;
    MatrixXd cols = MatrixXd::Zero(n, na + nc + ne);
    for (int k = 0; k < na; ++k) {
      for (const auto& [j, a] : p.rows[act_rows[k]].coef) cols(j, k) -= a;
    }
    for (int k = 0; k < nc; ++k) cols.col(na + k) = cone_grad(p.cones[act_cones[k]], x);
    if (ne > 0) cols.rightCols(ne) = -p.eq_a.transpose();
    std::vector<bool> keep(static_cast<size_t>(na + nc + ne), true);
    VectorXd m(na + nc + ne);
    m << h, nu, eta;
    for (int round = 0; round <= na + nc; ++round) {
      int worst = -1;
      for (int k = 0; k < na + nc; ++k) {
        if (keep[static_cast<size_t>(k)] && m[k] < -1e-10 && (worst < 0 || m[k] < m[worst])) worst = k;
      }
      if (worst < 0) break;
      keep[static_cast<size_t>(worst)] = false;
      std::vector<int> idx;
      for (int k = 0; k < na + nc + ne; ++k) {
        if (keep[static_cast<size_t>(k)]) idx.push_back(k);
      }
      MatrixXd sub(n, static_cast<Eigen::Index>(idx.size()));
      for (size_t k = 0; k < idx.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = cols.col(idx[k]);
      VectorXd fit = sub.completeOrthogonalDecomposition().solve(-grad);
      if ((sub * fit + grad).cwiseAbs().maxCoeff() > 1e-9) return false;
      m.setZero();
      for (size_t k = 0; k < idx.size(); ++k) m[idx[k]] = fit[static_cast<Eigen::Index>(k)];
    }
    h = m.head(na);
    nu = m.segment(na, nc);
    eta = m.tail(ne);
  }
  for (int k = 0; k < na; ++k) {
    if (h[k] < -1e-10) return false;
  }
  for (int k = 0; k < nc; ++k) {
    if (nu[k] < -1e-10) return false;
  }
  for (const auto& row : p.rows) {
    if (Centering::row_slack(row, x) < -1e-12 * std::max(1.0, std::abs(row.rhs))) return false;
  }
  for (const auto& cr : p.cones) {
    if (Centering::cone_value(cr, x) < -1e-12) return false;
  }
  if (!p.objective(x, grad, hdiag)) return false;

  res.x = x;
  res.row_mult.setZero();
  res.cone_mult.setZero();
  for (size_t r = 0; r < p.rows.size(); ++r) res.row_slack[static_cast<Eigen::Index>(r)] = Centering::row_slack(p.rows[r], x);
  for (size_t c = 0; c < p.cones.size(); ++c) res.cone_slack[static_cast<Eigen::Index>(c)] = Centering::cone_value(p.cones[c], x);
  for (int k = 0; k < na; ++k) res.row_mult[act_rows[k]] = std::max(h[k], 0.0);
  for (int k = 0; k < nc; ++k) res.cone_mult[act_cones[k]] = std::max(nu[k], 0.0);
  res.eq_mult = eta;
  return true;
}

}  // namespace

BarrierResult solve_barrier(const BarrierProblem& problem, const VectorXd& x0, const BarrierOptions& options) {
  const int n = problem.n;
  BarrierResult res;
  res.x = x0;
  if (n == 0) return res;

  MatrixXd basis;
  if (problem.eq_a.rows() > 0) {
    Eigen::FullPivLU<MatrixXd> lu(problem.eq_a);
    basis = lu.kernel();
    VectorXd r = problem.eq_b - problem.eq_a * res.x;
    if (r.cwiseAbs().maxCoeff() > 0) {
      res.x += problem.eq_a.completeOrthogonalDecomposition().solve(r);
    }
    if ((problem.eq_a * res.x - problem.eq_b).cwiseAbs().maxCoeff() > 1e-9) {
      throw InfeasibleError("barrier: equality constraints are inconsistent");
    }
    if (lu.rank() == n) basis = MatrixXd::Zero(n, 0);
  } else {
    basis = MatrixXd::Identity(n, n);
  }
  const int dim = static_cast<int>(basis.cols());

  Centering cen(problem);
  if (!cen.feasible(res.x)) throw InfeasibleError("barrier: starting point is not strictly feasible");

  const double m_eff = static_cast<double>(problem.rows.size()) + 2.0 * static_cast<double>(problem.cones.size());
  double mu = options.mu0;
  double centered_mu = std::numeric_limits<double>::infinity();
  VectorXd centered_x = res.x;
  bool stalled = false;
  while (true) {
    ++res.outer_steps;
    int steps = 0;
    // Past the first centering, numerical breakdown ends the path at the last
    // centered point.
    auto breakdown = [&](const std::string& what, double dec2) {
      if (!std::isfinite(centered_mu)) throw ConvergenceError(what, dec2);
      res.x = centered_x;
      mu = centered_mu;
      stalled = true;
    };
    while (dim > 0) {
      cen.feasible(res.x);
      VectorXd g = cen.gradient(res.x, mu);
      MatrixXd h = cen.hessian(res.x, mu);
      VectorXd gy = basis.transpose() * g;
      MatrixXd hy = basis.transpose() * h * basis;
      Eigen::LDLT<MatrixXd> ldlt(hy);
      VectorXd dy = ldlt.solve(-gy);
      if (ldlt.info() != Eigen::Success || !dy.allFinite() || gy.dot(dy) > 0) {
        double reg = 1e-12 * std::max(1.0, hy.diagonal().cwiseAbs().maxCoeff());
        Eigen::LLT<MatrixXd> llt(hy + reg * MatrixXd::Identity(dim, dim));
        dy = llt.solve(-gy);
      }
      double dec2 = -gy.dot(dy);
      if (!(dec2 >= 0) || !std::isfinite(dec2)) {
        breakdown("barrier: Newton direction is not a descent direction", dec2);
        break;
      }
          if (dec2 / 2.0 <= options.newton_tol) break;
      if (++steps > options.max_newton) {
        breakdown("barrier: centering exceeded " + std::to_string(options.max_newton) + " Newton steps", dec2);
        break;
      }
      ++res.newton_steps;
      VectorXd dx = basis * dy;
      double t = 1.0;
      while (t >= 1e-20 && !cen.feasible(res.x + t * dx)) t *= 0.5;
      if (t < 1e-20) {
        breakdown("barrier: cannot stay strictly feasible", dec2);
        break;
      }
      // Armijo on phi(t) - phi(0) = t * int_0^1 phi'(t s) ds.
      const double slope0 = -dec2;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        double integral = 0.0;
        bool ok = true;
        for (size_t q = 0; q < kGlNode.size(); ++q) {
          VectorXd xq = res.x + (t * kGlNode[q]) * dx;
          if (!cen.feasible(xq)) {
            ok = false;
            break;
          }
          integral += kGlWeight[q] * cen.gradient(xq, mu).dot(dx);
        }
        if (ok && t * integral <= 0.01 * t * slope0) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;  // no measurable progress left at this mu
      res.x += t * dx;
    }
    res.mu = mu;
    if (stalled) break;
    centered_mu = mu;
    centered_x = res.x;
    if (m_eff * mu < options.gap_tol || m_eff == 0) break;
    mu *= options.mu_factor;
  }

  cen.feasible(res.x);
  const auto nr = static_cast<Eigen::Index>(problem.rows.size());
  const auto nc = static_cast<Eigen::Index>(problem.cones.size());
  res.row_mult.resize(nr);
  res.row_slack.resize(nr);
  res.cone_mult.resize(nc);
  res.cone_slack.resize(nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    res.row_slack[r] = Centering::row_slack(problem.rows[r], res.x);
    res.row_mult[r] = mu / res.row_slack[r];
  }
  for (Eigen::Index c = 0; c < nc; ++c) {
    res.cone_slack[c] = Centering::cone_value(problem.cones[c], res.x);
    res.cone_mult[c] = mu / res.cone_slack[c];
  }
  res.stalled = stalled;
  res.polished = options.polish && polish(problem, res);
  if (stalled && !res.polished && m_eff * mu > options.stall_gap_tol) {
    throw ConvergenceError("barrier: path stalled at mu = " + std::to_string(mu), m_eff * mu);
  }

  VectorXd grad(n), hdiag(n);
  problem.objective(res.x, grad, hdiag);
  VectorXd lag = grad;
  double comp = 0.0;
  for (Eigen::Index r = 0; r < nr; ++r) {
    for (const auto& [k, a] : problem.rows[r].coef) lag[k] -= res.row_mult[r] * a;
    comp = std::max(comp, std::abs(res.row_mult[r] * res.row_slack[r]));
  }
  for (Eigen::Index c = 0; c < nc; ++c) {
    const auto& cone = problem.cones[c];
    if (cone.a >= 0) lag[cone.a] += res.cone_mult[c] * res.x[cone.b];
    lag[cone.b] += res.cone_mult[c] * Centering::a_of(cone, res.x);
    lag[cone.c] += res.cone_mult[c] * (-2.0 * res.x[cone.c]);
    comp = std::max(comp, std::abs(res.cone_mult[c] * res.cone_slack[c]));
  }
  if (problem.eq_a.rows() > 0) {
    MatrixXd at = problem.eq_a.transpose();
    if (!res.polished) res.eq_mult = at.colPivHouseholderQr().solve(lag);
    lag -= at * res.eq_mult;
  }
  res.stationarity = lag.size() ? lag.cwiseAbs().maxCoeff() : 0.0;
  res.complementarity = comp;
  res.kkt_residual = std::max(res.stationarity, res.complementarity);
  return res;
}

}  // namespace evgrid
