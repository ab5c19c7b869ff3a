#include "evgrid/fluid.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

const DurationLaw kExp1{DurationLaw::Kind::kExponential, 1.0};

Network two_node(double k = INFINITY) { return make_line({0.01, 0.005}, {0.01, 0.005}, k, INFINITY); }

ClassTable line_classes(const Network& net, double lam, const JointBD& joint, double c_max) {
  std::vector<double> l(net.node_count, lam);
  return single_type_classes(net, l, joint, c_max, fairness_weights(net));
}

StateZ uniform_state(const Network& net, double z) {
  NodeTypeMatrix m = zeros_like(net, 1);
  for (int i = 1; i < net.size(); ++i) m[i][0] = z;
  return make_state(net, m);
}

// G for exp(1)/exp(1) with weight w: G' = w (gamma - y) / y.
double g_obj(double w, double gamma, double y) { return w * (gamma * std::log(y) - y); }

TEST(FluidInvariant, HandKktLine) {
  Network net = two_node();
  ClassTable c = line_classes(net, 10.0, IndependentExp{1, 1}, 1.0);
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  for (int i = 1; i <= 2; ++i) {
    EXPECT_NEAR(pt.lam_star[i][0], 3.8, 1e-6);
    EXPECT_NEAR(pt.z_star[i][0], 6.2, 1e-6);
    EXPECT_NEAR(pt.p_star[i][0], 0.612903, 1e-6);
  }
  EXPECT_LE(pt.little_residual, 1e-8);
  // Multiplier of sum R_i Lambda_i <= delta is twice the squared-voltage one.
  EXPECT_NEAR(2 * pt.h_volt_lo[2], (10 - 3.8) / 3.8, 1e-6);

  // Brute-force grid over the feasible polytope at resolution 1e-3.
  const double w1 = 0.01, w2 = 0.015;
  double best = -INFINITY, b1 = 0, b2 = 0;
  for (int k = 1; k < 9500; ++k) {
    double l1 = k * 1e-3;
    double l2 = std::floor((0.095 - w1 * l1) / w2 * 1000.0) / 1000.0;
    if (l2 <= 0) break;
    l2 = std::min(l2, 5.0 - 1e-3);
    double v = g_obj(w1, 10, l1) + g_obj(w2, 10, l2);
    if (v > best) {
      best = v;
      b1 = l1;
      b2 = l2;
    }
  }
  EXPECT_NEAR(pt.lam_star[1][0], b1, 2e-3);
  EXPECT_NEAR(pt.lam_star[2][0], b2, 2e-3);
}

TEST(FluidInvariant, UnderloadedNodeSitsAtCap) {
  Network net = make_line({0.001}, {0.001}, INFINITY, INFINITY);
  ClassTable c = line_classes(net, 2.0, IndependentExp{1, 1}, 1.0);
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  EXPECT_NEAR(pt.lam_star[1][0], g_value(2.0, c.joint[0], 1.0), 1e-8);
  EXPECT_DOUBLE_EQ(pt.p_star[1][0], 1.0);
  EXPECT_NEAR(pt.success_prob[1][0], 0.5, 1e-12);
  EXPECT_NEAR(pt.z_star[1][0], 1.0, 1e-8);
  EXPECT_GT(pt.h_cap[1][0], 0.0);
}

TEST(FluidInvariant, DeterministicRatioCapsAtTheta) {
  Network net = two_node();
  DeterministicRatio r{0.02, kExp1};
  ClassTable c = line_classes(net, 30.0, r, 1.0);
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  EXPECT_FALSE(pt.support_condition_ok);
  for (int i = 1; i <= 2; ++i) EXPECT_LE(pt.lam_star[i][0], 30.0 * 0.02 + 1e-9);
}

// Fixed-point residual on lines, trees and every family.
TEST(FluidInvariant, LittleLawResidualAcrossFamilies) {
  std::vector<JointBD> fams{IndependentExp{1, 1},
                            IndependentExp{0.5, 2.0},
                            DeterministicRatio{0.3, kExp1},
                            DiscreteRatio{{0.1, 0.5}, {0.4, 0.6}, kExp1},
                            ParetoRatio{3.0, 2.0, kExp1},
                            Empirical{{{0.5, 1.0}, {1.0, 0.6}, {0.2, 2.0}}}};
  std::vector<Network> nets{two_node(), random_tree(5, 3, 0.005, 0.02)};
  for (const auto& net : nets) {
    for (const auto& f : fams) {
      std::vector<double> lam(net.node_count, 3.0);
      ClassTable c = single_type_classes(net, lam, f, 1.0, fairness_weights(net));
      for (LoadModel m : {LoadModel::kDistflow, LoadModel::kAc}) {
        InvariantPoint pt = invariant_solve(net, c, m);
        EXPECT_LE(pt.little_residual, 1e-8) << f.index();
        for (int i = 1; i < net.size(); ++i) {
          EXPECT_LE(pt.lam_star[i][0], g_value(3.0, f, 1.0) + 1e-9);
          EXPECT_NEAR(pt.z_star[i][0], 3.0 * expected_sojourn(f, pt.p_star[i][0]), 1e-8);
        }
      }
    }
  }
}

TEST(FluidInvariant, TwoTypesOnTree) {
  Network net = random_tree(6, 11, 0.005, 0.02);
  ClassTable c;
  c.type_count = 2;
  c.lambda = zeros_like(net, 2);
  c.utility.assign(net.size(), std::vector<Utility>(2));
  c.c_max = {1.0, 0.5};
  c.joint = {IndependentExp{1, 1}, DeterministicRatio{0.4, {DurationLaw::Kind::kDeterministic, 2.0}}};
  for (int i = 1; i < net.size(); ++i) {
    c.lambda[i] = {4.0, 2.0};
    c.utility[i][0].weight = net.paths.cum_r[i];
    c.utility[i][1].weight = 2 * net.paths.cum_r[i];
  }
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  EXPECT_LE(pt.little_residual, 1e-8);
  EXPECT_LE(pt.kkt_residual, 1e-8);
}

TEST(FluidInvariant, RejectsClosedFormModel) {
  Network net = two_node();
  ClassTable c = line_classes(net, 10.0, IndependentExp{1, 1}, 1.0);
  EXPECT_THROW(invariant_solve(net, c, LoadModel::kClosedForm), UnsupportedError);
}

TEST(FluidInvariant, EmpiricalSupportViolationIsAnError) {
  Network net = two_node();
  ClassTable c = line_classes(net, 10.0, Empirical{{{1.0, 2.0}, {1.0, 3.0}}}, 1.0);
  EXPECT_THROW(invariant_solve(net, c, LoadModel::kDistflow), PreconditionError);
}

TEST(FluidInvariant, ErlangConventionTwoNodeValues) {
  Network net = two_node(10.0);
  ClassTable c = line_classes(net, 12.0, IndependentExp{1, 1}, 1.0);
  InvariantOptions opt;
  opt.gamma = GammaConvention::kErlang;
  InvariantPoint d = invariant_solve(net, c, LoadModel::kDistflow, opt);
  EXPECT_NEAR(d.z_star[1][0], 4.5769, 5e-5);
  EXPECT_NEAR(d.z_star[2][0], 4.5769, 5e-5);
  InvariantPoint a = invariant_solve(net, c, LoadModel::kAc, opt);
  EXPECT_NEAR(a.z_star[1][0], 4.7356, 2e-4);
  EXPECT_NEAR(a.z_star[2][0], 4.7513, 2e-4);
  EXPECT_LE(a.exactness_gap, 1e-6);
}

ClassTable explicit_classes(const Network& net) { return line_classes(net, 12.0, IndependentExp{1, 1}, INFINITY); }

TEST(FluidExplicit, ExplicitTwoNodeValues) {
  Network net = two_node();
  ClassTable c = explicit_classes(net);
  FluidTrajectory tr = explicit_markov(net, c, uniform_state(net, 0.0), 10.0, 0.005);
  EXPECT_NEAR(tr.z[200][1][0], 8.2 * (1 - std::exp(-1.0)), 1e-12);
  // The reference value 5.18364 is 2.5e-4 above 8.2 (1 - 1/e).
  EXPECT_NEAR(tr.z[200][1][0], 5.18364, 1e-3);
  FluidTrajectory eq = explicit_markov(net, c, uniform_state(net, 8.2), 1.0, 0.1);
  for (const auto& z : eq.z) EXPECT_NEAR(z[2][0], 8.2, 1e-12);
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  EXPECT_NEAR(pt.lam_star[1][0], 3.8, 1e-6);
  EXPECT_NEAR(pt.z_star[1][0], 8.2, 1e-6);
  EXPECT_NEAR(pt.z_star[2][0], 8.2, 1e-6);
}

TEST(FluidExplicit, Preconditions) {
  Network net = two_node();
  ClassTable c = explicit_classes(net);
  EXPECT_THROW(explicit_markov(net, line_classes(net, 12, IndependentExp{1, 1}, 1.0), uniform_state(net, 0), 1, 0.1),
               UnsupportedError);
  StateZ skew = uniform_state(net, 0.0);
  skew.z[1][0] = 1.0;
  skew.q = skew.z;
  EXPECT_THROW(explicit_markov(net, c, skew, 1, 0.1), UnsupportedError);
  EXPECT_THROW(explicit_markov(two_node(10), c, uniform_state(net, 0), 1, 0.1), UnsupportedError);
}

TEST(FluidPicard, EmptySystemStaysEmpty) {
  Network net = two_node();
  ClassTable c = line_classes(net, 0.0, IndependentExp{1, 1}, 1.0);
  PicardOptions opt;
  opt.dt = 0.05;
  FluidTrajectory tr = picard_solve(net, c, uniform_state(net, 0.0), 2.0, opt);
  for (const auto& z : tr.z) {
    EXPECT_EQ(z[1][0], 0.0);
    EXPECT_EQ(z[2][0], 0.0);
  }
}

TEST(FluidPicard, MatchesExplicitMarkovTrajectory) {
  Network net = two_node();
  ClassTable c = explicit_classes(net);
  FluidTrajectory tr = picard_solve(net, c, uniform_state(net, 0.0), 10.0);
  FluidTrajectory ex = explicit_markov(net, c, uniform_state(net, 0.0), 10.0, 0.005);
  ASSERT_EQ(tr.z.size(), ex.z.size());
  double sup = 0.0;
  for (size_t n = 0; n < tr.z.size(); ++n) {
    for (int i = 1; i <= 2; ++i) sup = std::max(sup, std::abs(tr.z[n][i][0] - ex.z[n][i][0]));
  }
  EXPECT_LE(sup, 1e-3);
  EXPECT_NEAR(tr.z[200][1][0], 5.18364, 1e-3);
  EXPECT_NEAR(tr.z.back()[2][0], 8.2, 1e-3);
  EXPECT_LT(tr.last_change, 1e-8);
}

// Discrete invariance: the trapezoidal kernel moves z* by O(dt^2).
TEST(FluidPicard, InvariantPointIsStationary) {
  Network net = two_node();
  ClassTable c = explicit_classes(net);
  FluidTrajectory tr = picard_solve(net, c, uniform_state(net, 8.2), 3.0);
  for (const auto& z : tr.z) {
    EXPECT_NEAR(z[1][0], 8.2, 1e-4);
    EXPECT_NEAR(z[2][0], 8.2, 1e-4);
  }
}

TEST(FluidPicard, FiniteSpacesBoundQ) {
  Network net = two_node(5.0);
  ClassTable c = line_classes(net, 12.0, IndependentExp{1, 1}, 1.0);
  PicardOptions opt;
  opt.dt = 0.01;
  FluidTrajectory tr = picard_solve(net, c, uniform_state(net, 0.0), 6.0, opt);
  for (size_t n = 0; n < tr.z.size(); ++n) {
    for (int i = 1; i <= 2; ++i) {
      EXPECT_LE(tr.z[n][i][0], tr.q[n][i][0] + 1e-12);
      EXPECT_LE(tr.q[n][i][0], 5.0 + opt.dt * 12.0);
      EXPECT_GE(tr.z[n][i][0], 0.0);
    }
  }
  EXPECT_NEAR(tr.q.back()[1][0], 5.0, 0.1);
}

TEST(FluidStability, ConvergesFromSeveralStarts) {
  Network net = two_node();
  ClassTable c = explicit_classes(net);
  std::vector<StateZ> inits{uniform_state(net, 0.0), uniform_state(net, 8.2), uniform_state(net, 41.0)};
  PicardOptions opt;
  opt.dt = 0.01;
  StabilityReport rep = stability_check(net, c, inits, 12.0, opt);
  EXPECT_LT(rep.final_distance[0], 1e-3);
  for (double d : rep.distance_path[1]) EXPECT_LT(d, 1e-3);
  const auto& path = rep.distance_path[2];
  for (size_t n = 1; n < path.size(); ++n) EXPECT_LE(path[n], path[n - 1] + 1e-12);
}

TEST(FluidDiagnostic, DeterministicRatioCollapses) {
  Network net = make_line({0.001}, {0.001}, INFINITY, INFINITY);
  ClassTable c = line_classes(net, 1.0, DeterministicRatio{2.0, kExp1}, 3.0);
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  ASSERT_GE(pt.p_star[1][0], 2.0);
  auto d = objective_diagnostic(pt, c);
  ASSERT_EQ(d.size(), 1u);
  double expect = pt.gamma[1][0] * 1.0 * std::log(2.0) * net.paths.cum_r[1];
  EXPECT_NEAR(d[0].rhs, expect, 1e-12);
  EXPECT_NEAR(d[0].lhs, expect, 1e-9);
  EXPECT_LE(d[0].rel_gap, 1e-8);
}

// Both sides against a Monte-Carlo estimate of gamma E[D u(min(p, B/D))].
TEST(FluidDiagnostic, ExponentialAgainstMonteCarlo) {
  Network net = two_node();
  ClassTable c = line_classes(net, 10.0, IndependentExp{1, 1}, 1.0);
  InvariantPoint pt = invariant_solve(net, c, LoadModel::kDistflow);
  auto diag = objective_diagnostic(pt, c);
  std::mt19937_64 gen(7);
  std::exponential_distribution<double> e(1.0);
  const long n = 4'000'000;
  for (const auto& d : diag) {
    double p = pt.p_star[d.node][0];
    double w = c.utility[d.node][0].weight;
    double s = 0, s2 = 0, a = 0, a2 = 0;
    for (long k = 0; k < n; ++k) {
      double b = e(gen), dd = e(gen);
      double v = dd * w * std::log(std::min(p, b / dd));
      double va = dd * w * std::log(std::min(1.0, b / dd));
      s += v - va;
      s2 += (v - va) * (v - va);
      a += v;
      a2 += v * v;
    }
    double m = 10.0 * s / n, se = 10.0 * std::sqrt((s2 / n - (s / n) * (s / n)) / n);
    double mr = 10.0 * a / n, ser = 10.0 * std::sqrt((a2 / n - (a / n) * (a / n)) / n);
    EXPECT_NEAR(d.rhs, mr, 4.5 * ser);
    EXPECT_NEAR(d.lhs, m, 4.5 * se);
    EXPECT_LE(d.rel_gap_anchored, 1e-8);
    // The anchor term is nonzero whenever P(B/D < 1) > 0.
    EXPECT_LT(d.anchor_term, -1e-3);
  }
}

}  // namespace
}  // namespace evgrid
