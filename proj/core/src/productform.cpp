#include "evgrid/productform.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

void require_stable(const PsLoads& loads) {
  if (!loads.stable) {
    throw StabilityError("product form requires rho < 1 (rho = " + std::to_string(loads.rho_total) + ")");
  }
}

}  // namespace

PsLoads ps_loads(const Network& net, const std::vector<double>& lambda, double mean_b) {
  if (!is_line(net)) throw UnsupportedError("product form: network is not a line");
  if (static_cast<int>(lambda.size()) != net.node_count) throw ParameterError("lambda needs one entry per node");
  if (!(mean_b > 0) || !std::isfinite(mean_b)) throw ParameterError("E[B] must be positive and finite");
  PsLoads out;
  out.delta = delta(net, net.order.back());
  out.rho.assign(net.size(), 0.0);
  out.mu.assign(net.size(), 0.0);
  for (int i = 1; i < net.size(); ++i) {
    if (!(lambda[i - 1] >= 0)) throw ParameterError("lambda must be nonnegative");
    out.mu[i] = mean_b * net.paths.cum_r[i] / out.delta;
    out.rho[i] = lambda[i - 1] * out.mu[i];
    out.rho_total += out.rho[i];
  }
  out.stable = out.rho_total < 1.0;
  return out;
}

PsLoads ps_loads(const Network& net, const ClassTable& classes) {
  if (classes.type_count != 1) throw UnsupportedError("product form: single type only");
  std::vector<double> lam;
  for (int i = 1; i < net.size(); ++i) lam.push_back(classes.lambda[i][0]);
  return ps_loads(net, lam, mean_b(classes.joint[0]));
}

double stationary_probability(const PsLoads& loads, const std::vector<int>& n) {
  require_stable(loads);
  if (n.size() + 1 != loads.rho.size()) throw ParameterError("state needs one count per node");
  int total = 0;
  double log_p = std::log1p(-loads.rho_total);
  for (size_t i = 0; i < n.size(); ++i) {
    if (n[i] < 0) throw ParameterError("counts must be nonnegative");
    total += n[i];
    if (n[i] > 0) {
      if (loads.rho[i + 1] == 0) return 0.0;
      log_p += n[i] * std::log(loads.rho[i + 1]) - std::lgamma(n[i] + 1.0);
    }
  }
  log_p += std::lgamma(total + 1.0);
  return std::exp(log_p);
}

double total_count_probability(const PsLoads& loads, int m) {
  require_stable(loads);
  if (m < 0) throw ParameterError("count must be nonnegative");
  return (1.0 - loads.rho_total) * std::pow(loads.rho_total, m);
}

std::vector<double> mean_counts(const PsLoads& loads) {
  require_stable(loads);
  std::vector<double> out(loads.rho.size(), 0.0);
  for (size_t i = 1; i < out.size(); ++i) out[i] = loads.rho[i] / (1.0 - loads.rho_total);
  return out;
}

StateDistribution product_form_table(const PsLoads& loads, double min_mass) {
  require_stable(loads);
  if (!(min_mass > 0)) throw ParameterError("min_mass must be positive");
  const int I = static_cast<int>(loads.rho.size()) - 1;
  StateDistribution out;
  std::vector<int> n(I, 0);
  // Each state's mass is at most the mass of its total count.
  int m_max = 0;
  if (loads.rho_total > 0) {
    while (total_count_probability(loads, m_max + 1) >= min_mass) ++m_max;
  }
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == I - 1) {
      n[i] = left;
      double p = stationary_probability(loads, n);
      if (p >= min_mass) out[n] = p;
      return;
    }
    for (int k = 0; k <= left; ++k) {
      n[i] = k;
      rec(i + 1, left - k);
    }
  };
  for (int m = 0; m <= m_max; ++m) rec(0, m);
  return out;
}

ProductFormCheck validate_against_simulation(const Network& net, const ClassTable& classes, double horizon,
                                             std::uint64_t seed, double warmup) {
  ProductFormCheck out;
  out.loads = ps_loads(net, classes);
  require_stable(out.loads);
  for (int i = 1; i < net.size(); ++i) {
    if (std::isfinite(net.k_spaces[i])) throw PreconditionError("product form requires K = inf");
    const Utility& u = classes.utility[i][0];
    if (u.form != UtilityForm::kLog || u.weight != classes.utility[1][0].weight) {
      throw PreconditionError("product form requires equal-weight log utilities");
    }
  }
  if (std::isfinite(classes.c_max[0])) throw PreconditionError("product form requires unbounded c_max");

  Network sim_net = net;
  out.k_used = std::ceil(50.0 / (1.0 - out.loads.rho_total));
  for (int i = 1; i < sim_net.size(); ++i) sim_net.k_spaces[i] = out.k_used;
  SimOptions opt;
  opt.model = LoadModel::kClosedForm;
  opt.horizon = horizon;
  opt.warmup = warmup;
  opt.seed = seed;
  opt.ignore_deadlines = true;
  opt.record_states = true;
  out.metrics = simulate(sim_net, classes, opt);
  out.blocked = out.metrics.counts.blocked;
  if (out.blocked > 0) throw StabilityError("emulated K = inf blocked " + std::to_string(out.blocked) + " arrivals");

  StateDistribution ref = product_form_table(out.loads);
  for (const auto& [key, w] : out.metrics.states) {
    if (!ref.count(key)) ref[key] = stationary_probability(out.loads, key);
  }
  double covered = 0.0;
  for (const auto& [key, w] : ref) covered += w;
  out.lumped_mass = std::max(0.0, 1.0 - covered);
  out.states_compared = static_cast<long>(ref.size());
  out.tv = total_variation(out.metrics.states, ref) + 0.5 * out.lumped_mass;
  return out;
}

}  // namespace evgrid
