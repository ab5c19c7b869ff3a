#pragma once

#include <functional>
#include <vector>

#include "evgrid/allocator.hpp"
#include "opf_program.hpp"

namespace evgrid::detail {

// Gradient and second derivative of the separable objective in variable `a`
// at value v; false outside the domain.
using VarObjective = std::function<bool(int a, double v, double& grad, double& hess)>;

// Maximizes the objective over the OPF feasible set. Allocation::p holds the
// variable values, lam and node_power the drawn power coef * v.
Allocation solve_opf(const Network& net, int type_count, const std::vector<LoadVar>& vars, bool ac,
                     const VarObjective& objective, const AllocatorOptions& options);

}  // namespace evgrid::detail
