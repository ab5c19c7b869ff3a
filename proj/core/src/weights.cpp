#include "evgrid/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_value(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

void check_items(const std::vector<double>& values, const std::vector<double>& weights, double capacity) {
  if (values.size() != weights.size()) throw ParameterError("knapsack: values and weights differ in length");
  for (size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0) || !(weights[i] >= 0) || !std::isfinite(values[i]) || !std::isfinite(weights[i])) {
      throw ParameterError("knapsack: values and weights must be finite and nonnegative");
    }
  }
  if (!(capacity >= 0)) throw ParameterError("knapsack: capacity must be nonnegative");
}

// Backward DP over integer weights; keep[i][c] marks that taking item i is
// optimal (ties favor taking) for the suffix i.. with capacity c.
double dp_table(const std::vector<double>& values, const std::vector<long>& w, long cap,
                std::vector<std::vector<bool>>* keep) {
  const size_t n = values.size();
  std::vector<double> best(cap + 1, 0.0);
  if (keep) keep->assign(n, std::vector<bool>(cap + 1, false));
  for (size_t k = n; k-- > 0;) {
    if (!(values[k] > 0) || w[k] > cap) continue;
    for (long c = cap; c >= w[k]; --c) {
      double with = best[c - w[k]] + values[k];
      if (with > best[c] || same_value(with, best[c])) {
        if (keep) (*keep)[k][c] = true;
        best[c] = std::max(best[c], with);
      }
    }
  }
  return best[cap];
}

void check_problem(const WeightProblem& p) {
  if (p.size() == 0) throw ParameterError("weight problem has no nodes");
  if (p.cum_r.size() != p.gamma.size()) throw ParameterError("gamma and resistances differ in length");
  for (int i = 0; i < p.size(); ++i) {
    if (!(p.gamma[i] >= 0) || !(p.cum_r[i] > 0)) throw ParameterError("gamma must be >= 0 and R > 0");
  }
  if (!(p.mean_d > 0) || !(p.delta > 0)) throw ParameterError("E[D] and delta must be positive");
  if (p.h.kind == RatioLaw::Kind::kDeterministic && !(p.h.value > 0)) throw ParameterError("H must be positive");
  if (p.h.kind == RatioLaw::Kind::kPareto && (!(p.h.a > 1) || !(p.h.kappa > 0))) {
    throw ParameterError("Pareto H needs a > 1 and kappa > 0");
  }
}

void require_overload(const WeightProblem& p) {
  double o = p.overload();
  if (!(o > 1)) throw PreconditionError("weight design requires overload (certificate " + std::to_string(o) + ")");
}

void finish(const WeightProblem& p, WeightSolution& s) {
  s.success_rate.assign(p.size(), 0.0);
  for (int i = 0; i < p.size(); ++i) s.success_rate[i] = p.gamma[i] * ratio_cdf(p.h, s.c[i]);
  s.objective = weight_objective(p, s.c);
  s.constraint_lhs = weight_constraint(p, s.c);
  s.slack = p.delta - s.constraint_lhs;
}

}  // namespace

double ratio_mean(const RatioLaw& h) {
  return h.kind == RatioLaw::Kind::kDeterministic ? h.value : h.kappa / (h.a - 1.0);
}

double ratio_cdf(const RatioLaw& h, double c) {
  if (h.kind == RatioLaw::Kind::kDeterministic) return c >= h.value ? 1.0 : 0.0;
  if (!(c > 0)) return 0.0;
  if (std::isinf(c)) return 1.0;
  return 1.0 - std::pow(h.kappa / (c + h.kappa), h.a);
}

double ratio_min_mean(const RatioLaw& h, double c) {
  if (h.kind == RatioLaw::Kind::kDeterministic) return std::min(c, h.value);
  if (!(c > 0)) return 0.0;
  if (std::isinf(c)) return ratio_mean(h);
  return h.kappa / (h.a - 1.0) * (1.0 - std::pow(h.kappa / (c + h.kappa), h.a - 1.0));
}

double WeightProblem::overload() const {
  double s = 0.0;
  for (int i = 0; i < size(); ++i) s += mean_d * ratio_mean(h) * gamma[i] * cum_r[i];
  return s / delta;
}

WeightProblem make_weight_problem(const Network& net, const std::vector<double>& gamma, double mean_d,
                                  const RatioLaw& h) {
  if (!is_line(net)) throw UnsupportedError("weight design: network is not a line");
  if (static_cast<int>(gamma.size()) != net.node_count) throw ParameterError("gamma needs one entry per node");
  WeightProblem p;
  p.gamma = gamma;
  p.cum_r.assign(net.paths.cum_r.begin() + 1, net.paths.cum_r.end());
  p.mean_d = mean_d;
  p.delta = delta(net, net.order.back());
  p.h = h;
  check_problem(p);
  return p;
}

std::string to_string(WeightSolver kind) {
  switch (kind) {
    case WeightSolver::kKnapsack:
      return "knapsack";
    case WeightSolver::kConvex:
      return "convex";
    case WeightSolver::kBound:
      return "bound";
  }
  return "?";
}

KnapsackResult knapsack_enumerate(const std::vector<double>& values, const std::vector<double>& weights,
                                  double capacity) {
  check_items(values, weights, capacity);
  const int n = static_cast<int>(values.size());
  if (n > 30) throw ParameterError("knapsack enumeration limited to 30 items");
  KnapsackResult best;
  best.take.assign(n, false);
  std::vector<int> best_set;
  bool have = false;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double v = 0.0, w = 0.0;
    std::vector<int> set;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        v += values[i];
        w += weights[i];
        set.push_back(i);
      }
    }
    if (w > capacity * (1 + 1e-12)) continue;
    bool better = !have || (v > best.value && !same_value(v, best.value)) ||
                  (same_value(v, best.value) && std::lexicographical_compare(set.begin(), set.end(),
                                                                               best_set.begin(), best_set.end()));
    if (better) {
      have = true;
      best.value = v;
      best.weight = w;
      best_set = set;
    }
  }
  for (int i : best_set) best.take[i] = true;
  return best;
}

KnapsackResult solve_knapsack(const std::vector<double>& values, const std::vector<double>& weights, double capacity,
                              double resolution) {
  if (values.size() <= 20) return knapsack_enumerate(values, weights, capacity);
  return knapsack_dp(values, weights, capacity, resolution);
}

KnapsackResult knapsack_dp(const std::vector<double>& values, const std::vector<double>& weights, double capacity,
                           double resolution) {
  check_items(values, weights, capacity);
  const size_t n = values.size();
  if (!(resolution > 0)) throw ParameterError("knapsack resolution must be positive");
  double unit = resolution * std::max(capacity, 1e-300);
  long cap = static_cast<long>(std::floor(capacity / unit + 1e-9));
  std::vector<long> up(n), down(n);
  for (size_t i = 0; i < n; ++i) {
    up[i] = static_cast<long>(std::ceil(weights[i] / unit - 1e-9));
    down[i] = static_cast<long>(std::floor(weights[i] / unit + 1e-9));
  }
  std::vector<std::vector<bool>> keep;
  dp_table(values, up, cap, &keep);
  double upper = dp_table(values, down, cap, nullptr);
  KnapsackResult out;
  out.exhaustive = false;
  out.take.assign(n, false);
  long c = cap;
  for (size_t i = 0; i < n; ++i) {
    if (keep[i][c]) {
      out.take[i] = true;
      out.value += values[i];
      out.weight += weights[i];
      c -= up[i];
    }
  }
  out.gap_bound = std::max(0.0, upper - out.value);
  return out;
}

double weight_objective(const WeightProblem& prob, const std::vector<double>& c) {
  double s = 0.0;
  for (int i = 0; i < prob.size(); ++i) s += prob.gamma[i] * ratio_cdf(prob.h, c.at(i));
  return s;
}

double weight_constraint(const WeightProblem& prob, const std::vector<double>& c) {
  double s = 0.0;
  for (int i = 0; i < prob.size(); ++i) {
    if (prob.gamma[i] > 0) s += prob.gamma[i] * prob.mean_d * prob.cum_r[i] * ratio_min_mean(prob.h, c.at(i));
  }
  return s;
}

WeightSolution solve_deterministic_ratio(const WeightProblem& prob) {
  check_problem(prob);
  if (prob.h.kind != RatioLaw::Kind::kDeterministic) throw PreconditionError("knapsack solver needs deterministic H");
  require_overload(prob);
  const int n = prob.size();
  std::vector<double> weight(n);
  for (int i = 0; i < n; ++i) weight[i] = prob.mean_d * prob.gamma[i] * prob.cum_r[i] * prob.h.value;
  KnapsackResult k = solve_knapsack(prob.gamma, weight, prob.delta);
  WeightSolution s;
  s.kind = WeightSolver::kKnapsack;
  s.selected = k.take;
  s.c.assign(n, 0.0);
  s.w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (k.take[i]) {
      s.c[i] = prob.h.value;
      s.w[i] = prob.h.value * prob.cum_r[i];
    }
  }
  finish(prob, s);
  return s;
}

WeightSolution solve_pareto_ratio(const WeightProblem& prob) {
  check_problem(prob);
  if (prob.h.kind != RatioLaw::Kind::kPareto) throw PreconditionError("convex solver needs Pareto H");
  require_overload(prob);
  const int n = prob.size();
  const double a = prob.h.a, kappa = prob.h.kappa;
  const double beta = a / (a - 1.0);
  std::vector<double> alpha(n);
  double eta_hi = 0.0;
  for (int i = 0; i < n; ++i) {
    alpha[i] = prob.mean_d * kappa * prob.gamma[i] * prob.cum_r[i] / (a - 1.0);
    if (alpha[i] > 0) eta_hi = std::max(eta_hi, prob.gamma[i] * beta / alpha[i]);
  }
  // Stationarity gamma beta y^(beta - 1) = eta alpha solved per node, clipped to [0, 1].
  auto y_of = [&](int i, double eta) {
    if (!(alpha[i] > 0)) return 1.0;
    return std::min(1.0, std::pow(eta * alpha[i] / (prob.gamma[i] * beta), a - 1.0));
  };
  auto lhs = [&](double eta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += alpha[i] * (1.0 - y_of(i, eta));
    return s;
  };
  double lo = 0.0, hi = eta_hi;
  if (!(lhs(lo) > prob.delta) || !(lhs(hi) <= prob.delta)) {
    throw ConvergenceError("Pareto weights: multiplier bracket failed (lhs(0) = " + std::to_string(lhs(lo)) +
                           ", delta = " + std::to_string(prob.delta) + ")");
  }
  for (int it = 0; it < 400 && hi - lo > 1e-16 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (lhs(mid) > prob.delta ? lo : hi) = mid;
  }
  double eta = hi;
  WeightSolution s;
  s.kind = WeightSolver::kConvex;
  s.multiplier = eta;
  s.c.assign(n, 0.0);
  s.w.assign(n, 0.0);
  s.selected.assign(n, false);
  double kkt = std::abs(lhs(eta) - prob.delta) / prob.delta;
  for (int i = 0; i < n; ++i) {
    double y = y_of(i, eta);
    if (y < 1.0) {
      s.c[i] = kappa * (std::pow(y, -1.0 / (a - 1.0)) - 1.0);
      s.w[i] = s.c[i] * prob.cum_r[i];
      s.selected[i] = true;
    }
    if (!(alpha[i] > 0)) continue;
    double g = prob.gamma[i] * beta;
    if (y < 1.0) {
      kkt = std::max(kkt, std::abs(g * std::pow(y, beta - 1.0) - eta * alpha[i]) / g);
    } else {
      kkt = std::max(kkt, std::max(0.0, g - eta * alpha[i]) / g);
    }
  }
  s.kkt_residual = kkt;
  finish(prob, s);
  return s;
}

WeightSolution lower_bound_construction(const WeightProblem& prob) {
  check_problem(prob);
  if (std::abs(ratio_mean(prob.h) - 1.0) > 1e-12) throw PreconditionError("lower bound needs E[H] = 1");
  const int n = prob.size();
  std::vector<double> weight(n);
  for (int i = 0; i < n; ++i) weight[i] = prob.mean_d * prob.gamma[i] * prob.cum_r[i];
  KnapsackResult k = solve_knapsack(prob.gamma, weight, prob.delta);
  WeightSolution s;
  s.kind = WeightSolver::kBound;
  s.selected = k.take;
  s.c.assign(n, 0.0);
  s.w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (k.take[i]) {
      s.c[i] = kInf;
      s.w[i] = kInf;
    }
  }
  finish(prob, s);
  return s;
}

WeightEvaluation evaluate_weights(const Network& net, const ClassTable& classes, const std::vector<double>& w) {
  if (!is_line(net)) throw UnsupportedError("evaluate_weights: network is not a line");
  if (classes.type_count != 1) throw UnsupportedError("evaluate_weights: single type only");
  validate(net, classes);
  const int I = net.node_count;
  if (static_cast<int>(w.size()) != I) throw ParameterError("weights need one entry per node");
  bool any = false;
  for (double v : w) {
    if (!(v >= 0) || std::isnan(v)) throw ParameterError("weights must be nonnegative");
    any = any || v > 0;
  }
  if (!any) throw ParameterError("weights are all zero; cannot normalize");
  const JointBD& joint = classes.joint[0];
  const double cmax = classes.c_max[0];
  NodeTypeMatrix gamma = gamma_effective(net, classes);
  const auto& R = net.paths.cum_r;
  WeightEvaluation out;
  out.delta = delta(net, net.order.back());
  auto rate = [&](int i, double h) {
    if (!(w[i - 1] > 0)) return 0.0;
    return h > 0 ? std::min(cmax, w[i - 1] / (h * R[i])) : cmax;
  };
  auto load = [&](int i, double x) {
    if (!(x > 0)) return 0.0;
    return std::isinf(x) ? g_sup(gamma[i][0], joint) : g_value(gamma[i][0], joint, x);
  };
  auto F = [&](double h) {
    double s = 0.0;
    for (int i = 1; i <= I; ++i) s += R[i] * load(i, rate(i, h));
    return s;
  };
  double h = 0.0;
  if (F(0.0) > out.delta * (1 + 1e-12)) {
    double lo = 1.0, hi = 1.0;
    while (F(lo) <= out.delta) lo *= 0.5;
    while (F(hi) > out.delta) hi *= 2.0;
    for (int it = 0; it < 300 && hi - lo > 1e-15 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (F(mid) > out.delta ? lo : hi) = mid;
    }
    h = 0.5 * (lo + hi);
    out.tight = true;
  }
  out.h = h;
  out.lam_star = zeros_like(net, 1);
  out.z_star = zeros_like(net, 1);
  out.p_star = zeros_like(net, 1);
  out.success_prob.assign(net.size(), 0.0);
  for (int i = 1; i <= I; ++i) {
    double x = rate(i, h);
    double lam = load(i, x);
    out.p_star[i][0] = x;
    out.lam_star[i][0] = lam;
    out.z_star[i][0] = gamma[i][0] * expected_sojourn(joint, std::isinf(x) ? 0.0 : x);
    if (std::isinf(x)) out.z_star[i][0] = 0.0;
    out.success_prob[i] = x > 0 ? (std::isinf(x) ? 1.0 : success_probability(joint, x)) : 0.0;
    out.success_rate += gamma[i][0] * out.success_prob[i];
    out.constraint_lhs += R[i] * lam;
  }
  return out;
}

OverloadInstance overload_line_instance(const OverloadInstanceOptions& o) {
  if (o.nodes < 1) throw ParameterError("instance needs at least one node");
  if (!(o.overload > 0) || !(o.r_edge > 0) || !(o.mean_d > 0)) throw ParameterError("instance parameters must be positive");
  std::vector<double> r(o.nodes, o.r_edge);
  if (o.seed != 0) {
    Philox rng(o.seed, stream_key(0, 0, StreamPurpose::kInstance));
    for (double& v : r) v = o.r_edge * (0.5 + rng.uniform());
  }
  OverloadInstance out;
  out.net = make_line(r, r, kInf, kInf);
  out.mean_d = o.mean_d;
  double sum_r = 0.0;
  for (int i = 1; i < out.net.size(); ++i) sum_r += out.net.paths.cum_r[i];
  double g = o.overload * delta(out.net, out.net.order.back()) / (o.mean_d * sum_r);
  out.gamma.assign(o.nodes, g);
  return out;
}

}  // namespace evgrid
