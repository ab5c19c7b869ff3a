#include "evgrid/allocator.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "evgrid/errors.hpp"
#include "evgrid/rng.hpp"

namespace evgrid {
namespace {

Network two_node(double k = 10, double m = INFINITY) { return make_line({0.01, 0.005}, {0.01, 0.005}, k, m); }

ClassTable fair_classes(const Network& net, double c_max = INFINITY) {
  std::vector<double> lam(net.node_count, 1.0);
  return single_type_classes(net, lam, IndependentExp{1, 1}, c_max, fairness_weights(net));
}

StateZ state_of(const Network& net, std::vector<double> z) {
  NodeTypeMatrix m = zeros_like(net, 1);
  for (int i = 1; i < net.size(); ++i) m[i][0] = z.at(i - 1);
  return make_state(net, m);
}

TEST(AllocatorTest, FairnessRatesOnTwoNodeLine) {
  Network net = two_node();
  ClassTable c = fair_classes(net);
  StateZ s = state_of(net, {6.2, 6.2});
  Allocation a = allocate_distflow(net, c, s);
  EXPECT_NEAR(a.p[1][0], 0.095 / 0.155, 1e-8);
  EXPECT_NEAR(a.p[2][0], 0.095 / 0.155, 1e-8);
  EXPECT_NEAR(a.p[1][0], 0.612903, 1e-6);
  EXPECT_LE(a.kkt_residual, 1e-8);
  EXPECT_LE(distflow_kkt_residual(net, c, s, a), 1e-8);
  Allocation cf = fairness_closed_form(net, c, s);
  EXPECT_NEAR(cf.p[1][0], 0.095 / 0.155, 1e-15);
}

TEST(AllocatorTest, CapBindsForSingleEv) {
  Network net = two_node();
  ClassTable c = fair_classes(net, 1.0);
  Allocation a = allocate_distflow(net, c, state_of(net, {1, 0}));
  EXPECT_NEAR(a.p[1][0], 1.0, 1e-8);
  EXPECT_EQ(a.p[2][0], 0.0);
  EXPECT_GT(a.h_cap[1][0], 0.0);
}

TEST(AllocatorTest, ZeroStateZeroAllocation) {
  Network net = two_node();
  ClassTable c = fair_classes(net);
  Allocation a = allocate_distflow(net, c, state_of(net, {0, 0}));
  EXPECT_EQ(a.p[1][0], 0.0);
  EXPECT_EQ(a.p[2][0], 0.0);
  Allocation b = allocate_ac(net, c, state_of(net, {0, 0}));
  EXPECT_EQ(b.w[2], 1.0);
  EXPECT_EQ(b.exactness_gap, 0.0);
}

TEST(AllocatorTest, ClosedFormPreconditions) {
  Network net = two_node();
  ClassTable capped = fair_classes(net, 1.0);
  EXPECT_THROW(fairness_closed_form(net, capped, state_of(net, {1, 0})), PreconditionError);
  Network tree = build_network({{1, 0, 0.01, 0.01, 5, 5}, {2, 0, 0.01, 0.01, 5, 5}});
  EXPECT_THROW(fairness_closed_form(tree, fair_classes(tree), state_of(tree, {1, 1})), UnsupportedError);
}

TEST(AllocatorTest, ClosedFormMatchesSolverOnRandomLines) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Philox rng(seed, stream_key(0, 0, StreamPurpose::kSampling));
    int n = 2 + static_cast<int>(rng.uniform() * 4);
    std::vector<double> r, x, z;
    for (int k = 0; k < n; ++k) {
      r.push_back(0.002 + 0.01 * rng.uniform());
      x.push_back(r.back());
      z.push_back(rng.uniform() < 0.2 ? 0.0 : 10 * rng.uniform());
    }
    z[0] = 1 + z[0];
    Network net = make_line(r, x, 20, INFINITY);
    ClassTable c = fair_classes(net);
    StateZ s = state_of(net, z);
    Allocation a = allocate_distflow(net, c, s);
    Allocation cf = fairness_closed_form(net, c, s);
    double ref = 0;
    for (int i = 1; i < net.size(); ++i) ref += net.paths.cum_r[i] * z[i - 1];
    ref = 0.095 / ref;
    for (int i = 1; i < net.size(); ++i) {
      if (z[i - 1] == 0) {
        EXPECT_EQ(a.p[i][0], 0.0);
        continue;
      }
      EXPECT_NEAR(a.p[i][0], ref, 1e-8 * ref);
      EXPECT_NEAR(cf.p[i][0], ref, 1e-12 * ref);
    }
  }
}

TEST(AllocatorTest, BalanceProperty) {
  Network net = two_node();
  BalanceReport one = balance_check(net, {{0, 1, 1}});
  EXPECT_EQ(one.violations, 0);
  Philox rng(5, stream_key(0, 0, StreamPurpose::kSampling));
  std::vector<std::vector<double>> states;
  for (int k = 0; k < 100; ++k) {
    states.push_back({0, std::floor(10 * rng.uniform()), std::floor(10 * rng.uniform()) + 1});
  }
  BalanceReport many = balance_check(net, states);
  EXPECT_EQ(many.violations, 0);
  EXPECT_EQ(many.checked, 400);
}

// Random multi-type instance on a tree with node caps and c_max.
struct Inst {
  Network net;
  ClassTable classes;
  StateZ state;
};

Inst random_inst(std::uint64_t seed, int nodes, int types) {
  NetworkOptions opt;
  Network net = random_tree(nodes, seed, 0.002, 0.02, opt);
  Philox rng(seed, stream_key(0, 1, StreamPurpose::kSampling));
  for (int k = 1; k < net.size(); ++k) net.m_cap[k] = 0.5 + 3 * rng.uniform();
  ClassTable c;
  c.type_count = types;
  c.lambda = zeros_like(net, types);
  c.utility.assign(net.size(), std::vector<Utility>(types));
  for (int j = 0; j < types; ++j) {
    c.c_max.push_back(0.3 + rng.uniform());
    c.joint.push_back(IndependentExp{1, 1});
  }
  NodeTypeMatrix z = zeros_like(net, types);
  for (int i = 1; i < net.size(); ++i) {
    for (int j = 0; j < types; ++j) {
      c.utility[i][j].weight = 0.1 + rng.uniform();
      if (rng.uniform() < 0.3) c.utility[i][j] = {UtilityForm::kPower, 0.1 + rng.uniform(), 2.0};
      z[i][j] = rng.uniform() < 0.25 ? 0.0 : 5 * rng.uniform();
    }
  }
  return {net, c, make_state(net, z)};
}

TEST(AllocatorProperty, KktAndFeasibilityOnRandomTrees) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Inst in = random_inst(seed, 8, 2);
    Allocation a = allocate_distflow(in.net, in.classes, in.state);
    EXPECT_LE(a.kkt_residual, 1e-8) << seed;
    EXPECT_LE(distflow_kkt_residual(in.net, in.classes, in.state, a), 1e-8) << seed;
    auto w = distflow_voltages(in.net, a.node_power);
    for (int i = 1; i < in.net.size(); ++i) {
      EXPECT_GE(w[i], in.net.v_lo[i] - 1e-9);
      EXPECT_LE(a.node_power[i], in.net.m_cap[i] + 1e-9);
      for (int j = 0; j < 2; ++j) {
        EXPECT_LE(a.p[i][j], in.classes.c_max[j] + 1e-12);
        if (in.state.z[i][j] == 0) EXPECT_EQ(a.p[i][j], 0.0);
      }
    }
  }
}

TEST(AllocatorProperty, MonotoneInState) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Inst in = random_inst(seed, 6, 1);
    Philox rng(seed, stream_key(0, 2, StreamPurpose::kSampling));
    NodeTypeMatrix y = in.state.z;
    for (int i = 1; i < in.net.size(); ++i) {
      if (y[i][0] > 0) y[i][0] *= 0.2 + 0.8 * rng.uniform();
    }
    Allocation pz = allocate_distflow(in.net, in.classes, in.state);
    Allocation py = allocate_distflow(in.net, in.classes, make_state(in.net, y));
    for (int i = 1; i < in.net.size(); ++i) {
      if (y[i][0] > 0) EXPECT_GE(py.p[i][0], pz.p[i][0] - 1e-8) << "seed " << seed << " node " << i;
    }
  }
}

TEST(AllocatorProperty, WeightScaleInvariance) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Inst in = random_inst(seed, 6, 2);
    for (auto& row : in.classes.utility) {
      for (auto& u : row) u.form = UtilityForm::kLog;
    }
    ClassTable scaled = in.classes;
    for (auto& row : scaled.utility) {
      for (auto& u : row) u.weight *= 7.0;
    }
    Allocation a = allocate_distflow(in.net, in.classes, in.state);
    Allocation b = allocate_distflow(in.net, scaled, in.state);
    for (int i = 1; i < in.net.size(); ++i) {
      for (int j = 0; j < 2; ++j) EXPECT_NEAR(a.p[i][j], b.p[i][j], 1e-9);
    }
  }
}

TEST(AllocatorAcTest, SingleEdgeMatchesAcVoltageLimit) {
  Network net = make_line({0.01}, {0.01}, 10, INFINITY);
  ClassTable c = fair_classes(net);
  StateZ s = state_of(net, {6.2});
  Allocation a = allocate_ac(net, c, s);
  // Leaf voltage 0.9 exactly at the optimum: V0 V - V^2 = lam R.
  EXPECT_NEAR(a.lam[1][0], (0.9 - 0.81) / 0.01, 1e-6);
  EXPECT_LE(a.exactness_gap, 1e-6);
  AcSolution sol = ac_solve(net, a.node_power);
  EXPECT_NEAR(sol.w_kk[1], a.w[1], 1e-8);
}

TEST(AllocatorAcTest, AcServesLessThanDistflowOnOverloadedLine) {
  Network net = two_node();
  ClassTable c = fair_classes(net);
  StateZ s = state_of(net, {6.2, 6.2});
  Allocation ac = allocate_ac(net, c, s);
  Allocation df = allocate_distflow(net, c, s);
  EXPECT_LT(ac.node_power[1] + ac.node_power[2], df.node_power[1] + df.node_power[2]);
  EXPECT_LE(ac.exactness_gap, 1e-6);
  AcSolution sol = ac_solve(net, ac.node_power);
  for (int k = 1; k < net.size(); ++k) EXPECT_NEAR(sol.w_kk[k], ac.w[k], 1e-8);
}

TEST(AllocatorAcTest, ExactRelaxationOnRandomTrees) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    Inst in = random_inst(seed, 7, 1);
    Allocation a = allocate_ac(in.net, in.classes, in.state);
    EXPECT_LE(a.exactness_gap, 1e-6) << seed;
    EXPECT_FALSE(a.gap_flag);
    AcSolution sol = ac_solve(in.net, a.node_power);
    for (int k = 1; k < in.net.size(); ++k) {
      EXPECT_NEAR(sol.w_kk[k], a.w[k], 1e-7) << seed;
      EXPECT_GE(sol.w_kk[k], in.net.v_lo[k] - 1e-8);
    }
  }
}

}  // namespace
}  // namespace evgrid
