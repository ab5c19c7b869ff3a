#include "evgrid/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_law(const DurationLaw& d) {
  if (!(d.mean > 0) || !std::isfinite(d.mean)) throw ParameterError("duration mean must be positive and finite");
}

// P(D > u, D >= d)
double tail_gt_ge(const DurationLaw& law, double u, double d) {
  if (law.kind == DurationLaw::Kind::kExponential) {
    double t = std::max({u, d, 0.0});
    return std::exp(-t / law.mean);
  }
  return (law.mean > u && law.mean >= d) ? 1.0 : 0.0;
}

double sample_duration(const DurationLaw& law, Philox& rng) {
  if (law.kind == DurationLaw::Kind::kExponential) return rng.exponential(law.mean);
  return law.mean;
}

double pareto_mean(const ParetoRatio& p) { return p.kappa / (p.a - 1.0); }

// E[min(x, H)] for the Pareto ratio.
double pareto_min_mean(const ParetoRatio& p, double x) {
  return p.kappa / (p.a - 1.0) * (1.0 - std::pow(p.kappa / (x + p.kappa), p.a - 1.0));
}

}  // namespace

void validate(const JointBD& joint) {
  std::visit(Overloaded{
                 [](const IndependentExp& j) {
                   if (!(j.mean_b > 0) || !(j.mean_d > 0) || !std::isfinite(j.mean_b) || !std::isfinite(j.mean_d)) {
                     throw ParameterError("IndependentExp means must be positive and finite");
                   }
                 },
                 [](const DeterministicRatio& j) {
                   if (!(j.theta > 0)) throw ParameterError("DeterministicRatio theta must be positive");
                   check_law(j.d);
                 },
                 [](const DiscreteRatio& j) {
                   if (j.thetas.empty() || j.thetas.size() != j.probs.size()) {
                     throw ParameterError("DiscreteRatio needs matching nonempty thetas/probs");
                   }
                   double s = 0.0;
                   for (size_t k = 0; k < j.thetas.size(); ++k) {
                     if (!(j.thetas[k] > 0)) throw ParameterError("DiscreteRatio thetas must be positive");
                     if (!(j.probs[k] >= 0)) throw ParameterError("DiscreteRatio probs must be nonnegative");
                     s += j.probs[k];
                   }
                   if (std::abs(s - 1.0) > 1e-9) throw ParameterError("DiscreteRatio probs must sum to 1");
                   check_law(j.d);
                 },
                 [](const ParetoRatio& j) {
                   if (!(j.a > 1)) throw ParameterError("ParetoRatio shape a must exceed 1");
                   if (!(j.kappa > 0)) throw ParameterError("ParetoRatio kappa must be positive");
                   check_law(j.d);
                 },
                 [](const Empirical& j) {
                   if (j.samples.empty()) throw ParameterError("Empirical needs samples");
                   for (const auto& [b, d] : j.samples) {
                     if (!(b >= 0) || !(d > 0) || !std::isfinite(b) || !std::isfinite(d)) {
                       throw ParameterError("Empirical samples need b >= 0, d > 0, finite");
                     }
                   }
                 },
             },
             joint);
}

double mean_d(const JointBD& joint) {
  return std::visit(Overloaded{
                        [](const IndependentExp& j) { return j.mean_d; },
                        [](const DeterministicRatio& j) { return j.d.mean; },
                        [](const DiscreteRatio& j) { return j.d.mean; },
                        [](const ParetoRatio& j) { return j.d.mean; },
                        [](const Empirical& j) {
                          double s = 0.0;
                          for (const auto& s_ : j.samples) s += s_.second;
                          return s / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

double mean_b(const JointBD& joint) {
  return std::visit(Overloaded{
                        [](const IndependentExp& j) { return j.mean_b; },
                        [](const DeterministicRatio& j) { return j.theta * j.d.mean; },
                        [](const DiscreteRatio& j) {
                          double s = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) s += j.probs[k] * j.thetas[k];
                          return s * j.d.mean;
                        },
                        [](const ParetoRatio& j) { return pareto_mean(j) * j.d.mean; },
                        [](const Empirical& j) {
                          double s = 0.0;
                          for (const auto& s_ : j.samples) s += s_.first;
                          return s / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

double duration_tail(const DurationLaw& law, double t) {
  if (law.kind == DurationLaw::Kind::kExponential) return t <= 0 ? 1.0 : std::exp(-t / law.mean);
  return law.mean >= t ? 1.0 : 0.0;
}

double parking_tail(const JointBD& joint, double t) {
  if (t <= 0) return 1.0;
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) { return std::exp(-t / j.mean_d); },
                        [&](const DeterministicRatio& j) { return duration_tail(j.d, t); },
                        [&](const DiscreteRatio& j) { return duration_tail(j.d, t); },
                        [&](const ParetoRatio& j) { return duration_tail(j.d, t); },
                        [&](const Empirical& j) {
                          double c = 0.0;
                          for (const auto& s : j.samples) c += s.second >= t ? 1.0 : 0.0;
                          return c / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

std::pair<double, double> sample_bd(const JointBD& joint, Philox& rng) {
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) {
                          double b = rng.exponential(j.mean_b);
                          double d = rng.exponential(j.mean_d);
                          return std::make_pair(b, d);
                        },
                        [&](const DeterministicRatio& j) {
                          double d = sample_duration(j.d, rng);
                          return std::make_pair(j.theta * d, d);
                        },
                        [&](const DiscreteRatio& j) {
                          double u = rng.uniform();
                          size_t k = 0;
                          double acc = j.probs[0];
                          while (u > acc && k + 1 < j.thetas.size()) acc += j.probs[++k];
                          double d = sample_duration(j.d, rng);
                          return std::make_pair(j.thetas[k] * d, d);
                        },
                        [&](const ParetoRatio& j) {
                          double h = j.kappa * (std::pow(rng.uniform(), -1.0 / j.a) - 1.0);
                          double d = sample_duration(j.d, rng);
                          return std::make_pair(h * d, d);
                        },
                        [&](const Empirical& j) {
                          auto n = static_cast<double>(j.samples.size());
                          auto k = std::min(static_cast<size_t>(rng.uniform() * n), j.samples.size() - 1);
                          return j.samples[k];
                        },
                    },
                    joint);
}

double g_value(double gamma, const JointBD& joint, double x) {
  if (x <= 0) return 0.0;
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) { return gamma * j.mean_b * j.mean_d * x / (j.mean_b + j.mean_d * x); },
                        [&](const DeterministicRatio& j) { return gamma * j.d.mean * std::min(x, j.theta); },
                        [&](const DiscreteRatio& j) {
                          double s = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) s += j.probs[k] * std::min(x, j.thetas[k]);
                          return gamma * j.d.mean * s;
                        },
                        [&](const ParetoRatio& j) { return gamma * j.d.mean * pareto_min_mean(j, x); },
                        [&](const Empirical& j) {
                          double s = 0.0;
                          for (const auto& [b, d] : j.samples) s += std::min(d * x, b);
                          return gamma * s / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

double g_derivative(double gamma, const JointBD& joint, double x) {
  x = std::max(x, 0.0);
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) {
                          double den = j.mean_b + j.mean_d * x;
                          return gamma * j.mean_b * j.mean_b * j.mean_d / (den * den);
                        },
                        [&](const DeterministicRatio& j) { return x < j.theta ? gamma * j.d.mean : 0.0; },
                        [&](const DiscreteRatio& j) {
                          double s = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) {
                            if (x < j.thetas[k]) s += j.probs[k];
                          }
                          return gamma * j.d.mean * s;
                        },
                        [&](const ParetoRatio& j) { return gamma * j.d.mean * std::pow(j.kappa / (x + j.kappa), j.a); },
                        [&](const Empirical& j) {
                          double s = 0.0;
                          for (const auto& [b, d] : j.samples) {
                            if (d * x < b) s += d;
                          }
                          return gamma * s / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

double g_sup(double gamma, const JointBD& joint) { return gamma * mean_b(joint); }

double g_saturation(const JointBD& joint) {
  return std::visit(Overloaded{
                        [](const IndependentExp&) { return kInf; },
                        [](const DeterministicRatio& j) { return j.theta; },
                        [](const DiscreteRatio& j) {
                          double m = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) {
                            if (j.probs[k] > 0) m = std::max(m, j.thetas[k]);
                          }
                          return m;
                        },
                        [](const ParetoRatio&) { return kInf; },
                        [](const Empirical& j) {
                          double m = 0.0;
                          for (const auto& [b, d] : j.samples) m = std::max(m, b / d);
                          return m;
                        },
                    },
                    joint);
}

double g_inverse_bisect(double gamma, const JointBD& joint, double lam) {
  if (lam < 0 || !(gamma > 0)) {
    if (lam == 0) return 0.0;
    throw RangeError("g_inverse: value " + std::to_string(lam) + " outside the increasing range");
  }
  if (lam == 0) return 0.0;
  if (!(lam < g_sup(gamma, joint))) {
    throw RangeError("g_inverse: value " + std::to_string(lam) + " at or above sup g = " +
                     std::to_string(g_sup(gamma, joint)));
  }
  double lo = 0.0;
  double hi = 1.0;
  while (!(g_value(gamma, joint, hi) > lam)) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw RangeError("g_inverse: bracket overflow");
  }
  while (hi - lo > 1e-12) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g_value(gamma, joint, mid) < lam) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double g_inverse(double gamma, const JointBD& joint, double lam) {
  if (lam == 0) return 0.0;
  if (lam < 0 || !(gamma > 0) || !(lam < g_sup(gamma, joint))) {
    throw RangeError("g_inverse: value " + std::to_string(lam) + " outside the increasing range [0, " +
                     std::to_string(gamma > 0 ? g_sup(gamma, joint) : 0.0) + ")");
  }
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) { return lam * j.mean_b / (j.mean_d * (gamma * j.mean_b - lam)); },
                        [&](const DeterministicRatio& j) { return lam / (gamma * j.d.mean); },
                        [&](const DiscreteRatio& j) {
                          // g / (gamma E[D]) is piecewise linear with kinks at sorted thetas.
                          std::vector<size_t> idx(j.thetas.size());
                          std::iota(idx.begin(), idx.end(), 0);
                          std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return j.thetas[a] < j.thetas[b]; });
                          double target = lam / (gamma * j.d.mean);
                          double x0 = 0.0;
                          double v0 = 0.0;
                          double slope = 1.0;
                          for (size_t k : idx) {
                            double v1 = v0 + slope * (j.thetas[k] - x0);
                            if (target <= v1 && slope > 0) return x0 + (target - v0) / slope;
                            v0 = v1;
                            x0 = j.thetas[k];
                            slope -= j.probs[k];
                          }
                          throw RangeError("g_inverse: value beyond the increasing range");
                        },
                        [&](const ParetoRatio& j) {
                          double s = lam * (j.a - 1.0) / (gamma * j.d.mean * j.kappa);
                          return j.kappa * std::pow(1.0 - s, -1.0 / (j.a - 1.0)) - j.kappa;
                        },
                        [&](const Empirical&) { return g_inverse_bisect(gamma, joint, lam); },
                    },
                    joint);
}

double joint_tail(const JointBD& joint, double b, double d) {
  b = std::max(b, 0.0);
  d = std::max(d, 0.0);
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) { return std::exp(-b / j.mean_b - d / j.mean_d); },
                        [&](const DeterministicRatio& j) { return tail_gt_ge(j.d, b / j.theta, d); },
                        [&](const DiscreteRatio& j) {
                          double s = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) s += j.probs[k] * tail_gt_ge(j.d, b / j.thetas[k], d);
                          return s;
                        },
                        [&](const ParetoRatio& j) {
                          // E[1{D >= d} P(H > b / D)]
                          auto h_tail = [&](double s) {
                            if (b == 0) return 1.0;
                            return std::pow(j.kappa * s / (b + j.kappa * s), j.a);
                          };
                          if (j.d.kind == DurationLaw::Kind::kDeterministic) {
                            return j.d.mean >= d ? h_tail(j.d.mean) : 0.0;
                          }
                          if (b == 0) return std::exp(-d / j.d.mean);
                          double m = j.d.mean;
                          boost::math::quadrature::exp_sinh<double> integrator;
                          auto f = [&](double t) { return h_tail(d + t) * std::exp(-(d + t) / m) / m; };
                          return integrator.integrate(f, 0.0, kInf);
                        },
                        [&](const Empirical& j) {
                          double c = 0.0;
                          for (const auto& [sb, sd] : j.samples) {
                            if (sb > b && sd >= d) c += 1.0;
                          }
                          return c / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

double expected_sojourn(const JointBD& joint, double x) {
  if (x <= 0) return mean_d(joint);
  if (std::isinf(x)) return 0.0;
  return g_value(1.0, joint, x) / x;
}

double success_probability(const JointBD& joint, double x) {
  if (x <= 0) return 0.0;
  return std::visit(Overloaded{
                        [&](const IndependentExp& j) { return x * j.mean_d / (x * j.mean_d + j.mean_b); },
                        [&](const DeterministicRatio& j) { return x >= j.theta ? 1.0 : 0.0; },
                        [&](const DiscreteRatio& j) {
                          double s = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) {
                            if (x >= j.thetas[k]) s += j.probs[k];
                          }
                          return s;
                        },
                        [&](const ParetoRatio& j) { return 1.0 - std::pow(j.kappa / (x + j.kappa), j.a); },
                        [&](const Empirical& j) {
                          double c = 0.0;
                          for (const auto& [b, d] : j.samples) {
                            if (x * d >= b) c += 1.0;
                          }
                          return c / static_cast<double>(j.samples.size());
                        },
                    },
                    joint);
}

double inf_d_over_b(const JointBD& joint) {
  return std::visit(Overloaded{
                        [](const IndependentExp&) { return 0.0; },
                        [](const DeterministicRatio& j) { return 1.0 / j.theta; },
                        [](const DiscreteRatio& j) {
                          double m = 0.0;
                          for (size_t k = 0; k < j.thetas.size(); ++k) {
                            if (j.probs[k] > 0) m = std::max(m, j.thetas[k]);
                          }
                          return 1.0 / m;
                        },
                        [](const ParetoRatio&) { return 0.0; },
                        [](const Empirical& j) {
                          double m = kInf;
                          for (const auto& [b, d] : j.samples) m = std::min(m, b > 0 ? d / b : kInf);
                          return m;
                        },
                    },
                    joint);
}

double utility_value(const Utility& u, double p) {
  if (u.form == UtilityForm::kLog) return u.weight * std::log(p);
  return u.weight * std::pow(p, 1.0 - u.alpha) / (1.0 - u.alpha);
}

double utility_d1(const Utility& u, double p) {
  if (u.form == UtilityForm::kLog) return u.weight / p;
  return u.weight * std::pow(p, -u.alpha);
}

double utility_d2(const Utility& u, double p) {
  if (u.form == UtilityForm::kLog) return -u.weight / (p * p);
  return -u.alpha * u.weight * std::pow(p, -u.alpha - 1.0);
}

NodeTypeMatrix zeros_like(const Network& net, int type_count) {
  return NodeTypeMatrix(net.size(), std::vector<double>(type_count, 0.0));
}

ClassTable single_type_classes(const Network& net, const std::vector<double>& lambda, const JointBD& joint,
                               double c_max, const std::vector<double>& weights) {
  ClassTable c;
  c.type_count = 1;
  c.lambda = zeros_like(net, 1);
  c.c_max = {c_max};
  c.joint = {joint};
  c.utility.assign(net.size(), std::vector<Utility>(1));
  for (int i = 1; i < net.size(); ++i) {
    c.lambda[i][0] = lambda.at(i - 1);
    c.utility[i][0].weight = weights.at(i - 1);
  }
  return c;
}

std::vector<double> fairness_weights(const Network& net) {
  return std::vector<double>(net.paths.cum_r.begin() + 1, net.paths.cum_r.end());
}

void validate(const Network& net, const ClassTable& classes) {
  const int J = classes.type_count;
  if (J < 1) throw ParameterError("type_count must be positive");
  if (static_cast<int>(classes.lambda.size()) != net.size() || static_cast<int>(classes.utility.size()) != net.size()) {
    throw ParameterError("class table rows must match network size");
  }
  if (static_cast<int>(classes.c_max.size()) != J || static_cast<int>(classes.joint.size()) != J) {
    throw ParameterError("c_max / joint entries must match type_count");
  }
  for (int j = 0; j < J; ++j) {
    if (!(classes.c_max[j] > 0)) throw ParameterError("c_max must be positive");
    validate(classes.joint[j]);
  }
  for (int i = 1; i < net.size(); ++i) {
    if (static_cast<int>(classes.lambda[i].size()) != J || static_cast<int>(classes.utility[i].size()) != J) {
      throw ParameterError("class table columns must match type_count");
    }
    for (int j = 0; j < J; ++j) {
      if (!(classes.lambda[i][j] >= 0) || !std::isfinite(classes.lambda[i][j])) {
        throw ParameterError("lambda must be nonnegative and finite");
      }
      const Utility& u = classes.utility[i][j];
      if (!(u.weight > 0)) throw ParameterError("utility weights must be positive");
      if (u.form == UtilityForm::kPower && (!(u.alpha > 0) || u.alpha == 1.0)) {
        throw ParameterError("power utility needs alpha > 0, alpha != 1");
      }
    }
  }
}

double erlang_b(double servers, double offered) {
  if (std::isinf(servers)) return 0.0;
  if (offered <= 0) return 0.0;
  auto k_max = static_cast<long>(std::floor(servers));
  double b = 1.0;
  for (long k = 1; k <= k_max; ++k) b = offered * b / (static_cast<double>(k) + offered * b);
  return b;
}

NodeTypeMatrix gamma_effective(const Network& net, const ClassTable& classes, GammaConvention convention) {
  const int J = classes.type_count;
  NodeTypeMatrix gamma = zeros_like(net, J);
  for (int i = 1; i < net.size(); ++i) {
    double lam_i = 0.0;
    double offered = 0.0;
    for (int j = 0; j < J; ++j) {
      lam_i += classes.lambda[i][j];
      offered += classes.lambda[i][j] * mean_d(classes.joint[j]);
    }
    if (!(lam_i > 0)) continue;
    if (convention == GammaConvention::kBlockingCap) {
      double mix = offered / lam_i;
      double cap = net.k_spaces[i] / mix;
      double total = std::min(lam_i, cap);
      for (int j = 0; j < J; ++j) gamma[i][j] = classes.lambda[i][j] / lam_i * total;
    } else {
      double admit = 1.0 - erlang_b(net.k_spaces[i], offered);
      for (int j = 0; j < J; ++j) gamma[i][j] = classes.lambda[i][j] * admit;
    }
  }
  return gamma;
}

}  // namespace evgrid
