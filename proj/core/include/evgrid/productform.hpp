#pragma once

#include <cstdint>
#include <vector>

#include "evgrid/simulator.hpp"

namespace evgrid {

struct PsLoads {
  std::vector<double> rho;  // per node, slot 0 unused
  double rho_total = 0.0;
  bool stable = false;
  double delta = 0.0;
  std::vector<double> mu;  // mean service times E[B] R_i / delta
};

// rho_i = lambda_i E[B] R_i / delta on a line; delta from the deepest node.
PsLoads ps_loads(const Network& net, const std::vector<double>& lambda, double mean_b);
// Single-type class table; lambda taken from type 0.
PsLoads ps_loads(const Network& net, const ClassTable& classes);

// (1 - rho) (sum n)! prod rho_i^n_i / n_i!; n indexed by node - 1.
double stationary_probability(const PsLoads& loads, const std::vector<int>& n);

// (1 - rho) rho^m
double total_count_probability(const PsLoads& loads, int m);

// rho_i / (1 - rho), slot 0 unused.
std::vector<double> mean_counts(const PsLoads& loads);

// Every state with probability at least min_mass.
StateDistribution product_form_table(const PsLoads& loads, double min_mass = 1e-8);

struct ProductFormCheck {
  double tv = 0.0;
  double lumped_mass = 0.0;  // formula mass outside the compared states
  long states_compared = 0;
  double k_used = 0.0;  // parking spaces used to emulate K = inf
  long blocked = 0;
  PsLoads loads;
  SimMetrics metrics;
};

// Simulates the line with unit-weight proportional fairness (closed-form
// rates), EVs leaving once charged, K = ceil(50 / (1 - rho)), and compares
// the time-weighted Z distribution to the formula.
ProductFormCheck validate_against_simulation(const Network& net, const ClassTable& classes, double horizon,
                                             std::uint64_t seed, double warmup = -1.0);

}  // namespace evgrid
