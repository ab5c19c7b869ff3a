#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evgrid/allocator.hpp"

namespace evgrid {

// Law of H = B / D (independent of D).
struct RatioLaw {
  enum class Kind { kDeterministic, kPareto };
  Kind kind = Kind::kDeterministic;
  double value = 1.0;  // deterministic H
  double a = 2.0;      // Pareto shape, P(H > h) = (kappa / (h + kappa))^a
  double kappa = 1.0;

  static RatioLaw deterministic(double h) { return {Kind::kDeterministic, h, 0.0, 0.0}; }
  // Pareto with the given shape and mean.
  static RatioLaw pareto_with_mean(double a, double mean) { return {Kind::kPareto, 0.0, a, mean * (a - 1.0)}; }
};

double ratio_mean(const RatioLaw& h);
double ratio_cdf(const RatioLaw& h, double c);     // P(H <= c)
double ratio_min_mean(const RatioLaw& h, double c);  // E[min(c, H)]

// Vectors are indexed by node - 1.
struct WeightProblem {
  std::vector<double> gamma;
  std::vector<double> cum_r;
  double mean_d = 1.0;
  double delta = 0.0;
  RatioLaw h;

  int size() const { return static_cast<int>(gamma.size()); }
  // sum E[B] gamma_i R_i / delta
  double overload() const;
};

WeightProblem make_weight_problem(const Network& net, const std::vector<double>& gamma, double mean_d,
                                  const RatioLaw& h);

enum class WeightSolver { kKnapsack, kConvex, kBound };
std::string to_string(WeightSolver kind);

struct WeightSolution {
  std::vector<double> w;
  std::vector<double> c;  // w_i / R_i
  std::vector<bool> selected;
  std::vector<double> success_rate;  // gamma_i P(H <= c_i)
  double objective = 0.0;
  double constraint_lhs = 0.0;  // sum gamma_i E[D] R_i E[min(c_i, H)]
  double slack = 0.0;           // delta - constraint_lhs
  double kkt_residual = 0.0;    // convex solver only
  double multiplier = 0.0;      // convex solver only
  WeightSolver kind = WeightSolver::kKnapsack;
};

struct KnapsackResult {
  std::vector<bool> take;
  double value = 0.0;
  double weight = 0.0;
  bool exhaustive = true;
  double gap_bound = 0.0;  // DP only: value lost to weight rounding is at most this
};

// Exact 0-1 knapsack. Exhaustive search for n <= 20, otherwise dynamic
// programming on weights rounded up to resolution * capacity. Among optimal
// sets the lexicographically smallest sorted index list wins.
KnapsackResult solve_knapsack(const std::vector<double>& values, const std::vector<double>& weights, double capacity,
                              double resolution = 1e-6);
// Weights rounded up to resolution * capacity units; gap_bound compares with
// the rounded-down relaxation.
KnapsackResult knapsack_dp(const std::vector<double>& values, const std::vector<double>& weights, double capacity,
                           double resolution = 1e-6);
KnapsackResult knapsack_enumerate(const std::vector<double>& values, const std::vector<double>& weights,
                                  double capacity);

double weight_objective(const WeightProblem& prob, const std::vector<double>& c);
double weight_constraint(const WeightProblem& prob, const std::vector<double>& c);

WeightSolution solve_deterministic_ratio(const WeightProblem& prob);
WeightSolution solve_pareto_ratio(const WeightProblem& prob);
WeightSolution lower_bound_construction(const WeightProblem& prob);

struct WeightEvaluation {
  double h = 0.0;  // voltage multiplier; 0 when the constraint is slack at saturation
  bool tight = false;
  NodeTypeMatrix lam_star;
  NodeTypeMatrix z_star;
  NodeTypeMatrix p_star;
  std::vector<double> success_prob;  // per node
  double success_rate = 0.0;         // sum gamma_i P(x_i D >= B)
  double constraint_lhs = 0.0;       // sum R_i Lambda_i
  double delta = 0.0;
};

// Single-constraint invariant point of weighted proportional fairness on a
// line: Lambda_i = g_i(w_i / (h R_i)) with h set by sum R_i Lambda_i = delta.
WeightEvaluation evaluate_weights(const Network& net, const ClassTable& classes, const std::vector<double>& w);

struct OverloadInstanceOptions {
  int nodes = 10;
  double overload = 1.17;
  double r_edge = 0.005;
  double mean_d = 1.0;
  std::uint64_t seed = 0;  // 0: equal resistances; otherwise r_edge * U(0.5, 1.5)
};

struct OverloadInstance {
  Network net;
  std::vector<double> gamma;  // equal per node, scaled to the overload
  double mean_d = 1.0;
};

// Line with equal arrival rates such that sum E[D] E[H] gamma_i R_i / delta
// equals the overload for E[H] = 1.
OverloadInstance overload_line_instance(const OverloadInstanceOptions& options = {});

}  // namespace evgrid
