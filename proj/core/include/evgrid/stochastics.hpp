#pragma once

#include <utility>
#include <variant>
#include <vector>

#include "evgrid/grid.hpp"
#include "evgrid/rng.hpp"

namespace evgrid {

struct DurationLaw {
  enum class Kind { kExponential, kDeterministic };
  Kind kind = Kind::kExponential;
  double mean = 1.0;
};

// B and D independent exponentials.
struct IndependentExp {
  double mean_b = 1.0;
  double mean_d = 1.0;
};

// B = theta * D.
struct DeterministicRatio {
  double theta = 1.0;
  DurationLaw d;
};

// B = Theta * D with P(Theta = thetas[k]) = probs[k].
struct DiscreteRatio {
  std::vector<double> thetas;
  std::vector<double> probs;
  DurationLaw d;
};

// B = H * D, P(H > h) = (kappa / (h + kappa))^a, a > 1.
struct ParetoRatio {
  double a = 2.0;
  double kappa = 1.0;
  DurationLaw d;
};

// Equally weighted (b, d) sample pairs.
struct Empirical {
  std::vector<std::pair<double, double>> samples;
};

using JointBD = std::variant<IndependentExp, DeterministicRatio, DiscreteRatio, ParetoRatio, Empirical>;

void validate(const JointBD& joint);
double mean_b(const JointBD& joint);
double mean_d(const JointBD& joint);
double duration_tail(const DurationLaw& law, double t);  // P(D >= t)
double parking_tail(const JointBD& joint, double t);     // P(D >= t)
std::pair<double, double> sample_bd(const JointBD& joint, Philox& rng);

// g(x) = gamma * E[min(D x, B)]
double g_value(double gamma, const JointBD& joint, double x);
// Right derivative gamma * E[D 1{D x < B}].
double g_derivative(double gamma, const JointBD& joint, double x);
// lim_{x->inf} g(x) = gamma * E[B]
double g_sup(double gamma, const JointBD& joint);
// Smallest x at which g stops increasing (+inf if never).
double g_saturation(const JointBD& joint);
// Inverse on the strictly increasing range; RangeError outside [0, g_sup).
double g_inverse(double gamma, const JointBD& joint, double lam);
// Bracketed bisection inverse, x_hi doubled from 1, tolerance 1e-12 on x.
double g_inverse_bisect(double gamma, const JointBD& joint, double lam);

// P(B > b, D >= d)
double joint_tail(const JointBD& joint, double b, double d);
// E[min(D, B / x)]; E[D] at x = 0.
double expected_sojourn(const JointBD& joint, double x);
// P(x D >= B): probability of leaving fully charged at constant rate x.
double success_probability(const JointBD& joint, double x);
// inf(D / B) over the support.
double inf_d_over_b(const JointBD& joint);

enum class UtilityForm { kLog, kPower };

// kLog: w log p. kPower: w p^(1-alpha) / (1-alpha), alpha > 0, alpha != 1.
struct Utility {
  UtilityForm form = UtilityForm::kLog;
  double weight = 1.0;
  double alpha = 2.0;
};

double utility_value(const Utility& u, double p);
double utility_d1(const Utility& u, double p);
double utility_d2(const Utility& u, double p);

using NodeTypeMatrix = std::vector<std::vector<double>>;  // [node][type], row 0 unused

struct ClassTable {
  int type_count = 1;
  NodeTypeMatrix lambda;
  std::vector<double> c_max;
  std::vector<JointBD> joint;
  std::vector<std::vector<Utility>> utility;  // [node][type]
};

// Single type, per-node arrival rates, one law, log utilities with given weights.
ClassTable single_type_classes(const Network& net, const std::vector<double>& lambda,
                               const JointBD& joint, double c_max,
                               const std::vector<double>& weights);
std::vector<double> fairness_weights(const Network& net);  // w_i = cum_r[i], slot 0 = 0

void validate(const Network& net, const ClassTable& classes);

enum class GammaConvention { kBlockingCap, kErlang };

// Admitted arrival rate: the blocking cap (kBlockingCap) or
// lambda * (1 - ErlangB(K, offered load)) (kErlang).
NodeTypeMatrix gamma_effective(const Network& net, const ClassTable& classes,
                               GammaConvention convention = GammaConvention::kBlockingCap);

// Erlang loss probability for floor(servers) servers and offered load a.
double erlang_b(double servers, double offered);

NodeTypeMatrix zeros_like(const Network& net, int type_count);

}  // namespace evgrid
