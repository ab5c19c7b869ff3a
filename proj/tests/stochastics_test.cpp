#include "evgrid/stochastics.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

// Independent Monte-Carlo oracle: std::mt19937_64 with std distributions,
// not the library sampler.
struct McDraw {
  double b;
  double d;
};

class Oracle {
 public:
  explicit Oracle(std::uint64_t seed) : gen_(seed) {}

  double draw_d(const DurationLaw& law) {
    if (law.kind == DurationLaw::Kind::kDeterministic) return law.mean;
    return std::exponential_distribution<double>(1.0 / law.mean)(gen_);
  }

  McDraw draw(const JointBD& joint) {
    if (auto* e = std::get_if<IndependentExp>(&joint)) {
      double b = std::exponential_distribution<double>(1.0 / e->mean_b)(gen_);
      double d = std::exponential_distribution<double>(1.0 / e->mean_d)(gen_);
      return {b, d};
    }
    if (auto* r = std::get_if<DeterministicRatio>(&joint)) {
      double d = draw_d(r->d);
      return {r->theta * d, d};
    }
    if (auto* r = std::get_if<DiscreteRatio>(&joint)) {
      std::discrete_distribution<int> pick(r->probs.begin(), r->probs.end());
      double th = r->thetas[pick(gen_)];
      double d = draw_d(r->d);
      return {th * d, d};
    }
    if (auto* r = std::get_if<ParetoRatio>(&joint)) {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
      double h = r->kappa * (std::pow(1.0 - u, -1.0 / r->a) - 1.0);
      double d = draw_d(r->d);
      return {h * d, d};
    }
    const auto& emp = std::get<Empirical>(joint);
    std::uniform_int_distribution<size_t> pick(0, emp.samples.size() - 1);
    auto s = emp.samples[pick(gen_)];
    return {s.first, s.second};
  }

 private:
  std::mt19937_64 gen_;
};

struct MeanCi {
  double mean;
  double se;
};

template <class F>
MeanCi mc_mean(const JointBD& joint, long n, std::uint64_t seed, F f) {
  Oracle o(seed);
  double s = 0.0;
  double s2 = 0.0;
  for (long k = 0; k < n; ++k) {
    McDraw x = o.draw(joint);
    double v = f(x);
    s += v;
    s2 += v * v;
  }
  double m = s / static_cast<double>(n);
  double var = s2 / static_cast<double>(n) - m * m;
  return {m, std::sqrt(std::max(var, 0.0) / static_cast<double>(n))};
}

constexpr long kMcSamples = 10'000'000;

std::vector<JointBD> all_families() {
  DurationLaw exp1{DurationLaw::Kind::kExponential, 1.0};
  DurationLaw det2{DurationLaw::Kind::kDeterministic, 2.0};
  return {
      IndependentExp{1.0, 1.0},
      IndependentExp{0.2, 1.5},
      DeterministicRatio{0.02, exp1},
      DeterministicRatio{2.0, det2},
      DiscreteRatio{{0.001, 0.02}, {0.1, 0.9}, exp1},
      ParetoRatio{3.0, 2.0, exp1},
      ParetoRatio{1.1, 0.1, exp1},
      Empirical{{{0.5, 1.0}, {2.0, 0.5}, {1.0, 3.0}}},
  };
}

TEST(StochasticsTest, GValueExamples) {
  EXPECT_NEAR(g_value(10.0, IndependentExp{1, 1}, 1.0), 5.0, 1e-15);
  DeterministicRatio r{0.02, {DurationLaw::Kind::kExponential, 1.0}};
  EXPECT_NEAR(g_value(0.6, r, 1.0), 0.012, 1e-15);
  for (const auto& j : all_families()) EXPECT_EQ(g_value(1.3, j, 0.0), 0.0);
}

TEST(StochasticsOracle, ExpMinCoversHalf) {
  MeanCi m = mc_mean(IndependentExp{1, 1}, kMcSamples, 11, [](McDraw x) { return std::min(x.d, x.b); });
  EXPECT_LE(std::abs(m.mean - 0.5), 3 * m.se);
}

// Every closed form of g, the joint tail and the success probability
// against the Monte-Carlo oracle: 4.5 sigma (about 100 comparisons) plus a
// few-count floor for events rarer than 1/n.
TEST(StochasticsOracle, ClosedFormsMatchMonteCarlo) {
  std::uint64_t seed = 100;
  const double floor = 10.0 / static_cast<double>(kMcSamples / 4);
  for (const auto& j : all_families()) {
    for (double x : {0.01, 0.5, 2.0}) {
      MeanCi m = mc_mean(j, kMcSamples / 4, ++seed, [x](McDraw s) { return std::min(s.d * x, s.b); });
      EXPECT_LE(std::abs(g_value(1.0, j, x) - m.mean), 4.5 * m.se + 1e-12) << "variant " << j.index() << " x " << x;
      MeanCi ps = mc_mean(j, kMcSamples / 4, ++seed, [x](McDraw s) { return x * s.d >= s.b ? 1.0 : 0.0; });
      EXPECT_LE(std::abs(success_probability(j, x) - ps.mean), 4.5 * ps.se + floor) << "variant " << j.index();
    }
    for (auto [b, d] : {std::pair{0.0, 0.0}, std::pair{0.3, 0.2}, std::pair{1.0, 1.0}, std::pair{0.01, 2.5}}) {
      MeanCi t = mc_mean(j, kMcSamples / 4, ++seed, [b, d](McDraw s) { return (s.b > b && s.d >= d) ? 1.0 : 0.0; });
      EXPECT_LE(std::abs(joint_tail(j, b, d) - t.mean), 4.5 * t.se + floor)
          << "variant " << j.index() << " b " << b << " d " << d;
    }
  }
}

TEST(StochasticsTest, GInverseExamples) {
  EXPECT_NEAR(g_inverse(10.0, IndependentExp{1, 1}, 3.8), 3.8 / 6.2, 1e-15);
  EXPECT_NEAR(g_inverse(10.0, IndependentExp{1, 1}, 3.8), 0.612903, 1e-6);
  EXPECT_NEAR(g_inverse_bisect(10.0, IndependentExp{1, 1}, 3.8), 3.8 / 6.2, 1e-10);
  ParetoRatio par{3.0, 2.0, {DurationLaw::Kind::kExponential, 1.0}};
  EXPECT_NEAR(g_inverse(1.0, par, 5.0 / 9.0), 1.0, 1e-12);
}

TEST(StochasticsTest, ParetoAnchorByQuadrature) {
  // E[min(H, 1)] = int_0^1 P(H > h) dh, composite Simpson.
  const double a = 3.0;
  const double kappa = 2.0;
  const int n = 2000;
  double s = 0.0;
  for (int k = 0; k <= n; ++k) {
    double h = static_cast<double>(k) / n;
    double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    s += w * std::pow(kappa / (h + kappa), a);
  }
  s /= 3.0 * n;
  EXPECT_NEAR(s, 5.0 / 9.0, 1e-12);
  ParetoRatio par{a, kappa, {DurationLaw::Kind::kExponential, 1.0}};
  EXPECT_NEAR(g_value(1.0, par, 1.0), s, 1e-12);
}

TEST(StochasticsTest, GInverseRoundTripAndBisectionAgreement) {
  for (const auto& j : all_families()) {
    double sat = g_saturation(j);
    for (double x : {1e-3, 0.01, 0.3, 1.0, 4.0}) {
      if (x >= sat) continue;
      double y = g_value(2.0, j, x);
      EXPECT_NEAR(g_inverse(2.0, j, y), x, 1e-9 * std::max(1.0, x)) << "variant " << j.index();
      EXPECT_NEAR(g_inverse_bisect(2.0, j, y), x, 1e-10 * std::max(1.0, x)) << "variant " << j.index();
    }
  }
}

TEST(StochasticsTest, GInverseRangeErrors) {
  IndependentExp e{1, 1};
  EXPECT_THROW(g_inverse(10.0, e, 10.0), RangeError);
  EXPECT_THROW(g_inverse(10.0, e, -1.0), RangeError);
  DeterministicRatio r{0.02, {DurationLaw::Kind::kExponential, 1.0}};
  EXPECT_THROW(g_inverse(1.0, r, 0.02), RangeError);
  EXPECT_NO_THROW(g_inverse(1.0, r, 0.0199));
  EXPECT_EQ(g_inverse(1.0, r, 0.0), 0.0);
}

TEST(StochasticsTest, JointTailExamples) {
  EXPECT_DOUBLE_EQ(joint_tail(IndependentExp{1, 1}, 0, 0), 1.0);
  EXPECT_NEAR(joint_tail(IndependentExp{1, 1}, 1, 1), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(joint_tail(IndependentExp{1, 1}, 1, 1), 0.135335, 1e-6);
  DeterministicRatio r{2.0, {DurationLaw::Kind::kExponential, 1.0}};
  EXPECT_NEAR(joint_tail(r, 4.0, 1.0), std::exp(-2.0), 1e-15);
}

TEST(StochasticsTest, GammaEffectiveExamples) {
  Network net = make_line({0.01}, {0.01}, 1.0, 8.0);
  ClassTable c;
  c.type_count = 2;
  c.lambda = {{0, 0}, {0.48, 0.72}};
  c.c_max = {1, 1};
  DurationLaw exp1{DurationLaw::Kind::kExponential, 1.0};
  c.joint = {DeterministicRatio{0.01, exp1}, DeterministicRatio{0.02, exp1}};
  c.utility.assign(2, std::vector<Utility>(2));
  auto g = gamma_effective(net, c);
  EXPECT_NEAR(g[1][0], 0.4, 1e-15);
  EXPECT_NEAR(g[1][1], 0.6, 1e-15);

  Network inf_net = make_line({0.01}, {0.01}, INFINITY, 8.0);
  auto g_inf = gamma_effective(inf_net, c);
  EXPECT_DOUBLE_EQ(g_inf[1][0], 0.48);
  EXPECT_DOUBLE_EQ(g_inf[1][1], 0.72);

  Network ten = make_line({0.01}, {0.01}, 10.0, 8.0);
  ClassTable one = single_type_classes(ten, {12.0}, IndependentExp{1, 1}, 1.0, {1.0});
  EXPECT_DOUBLE_EQ(gamma_effective(ten, one)[1][0], 10.0);
}

TEST(StochasticsTest, ErlangConvention) {
  // Erlang loss recursion against the explicit sum a^K/K! / sum_k a^k/k!.
  auto direct = [](int K, double a) {
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k <= K; ++k) {
      term *= a / k;
      sum += term;
    }
    return term / sum;
  };
  EXPECT_NEAR(erlang_b(10, 12), direct(10, 12), 1e-14);
  EXPECT_NEAR(erlang_b(2, 1), 0.2, 1e-15);
  Network ten = make_line({0.01}, {0.01}, 10.0, 8.0);
  ClassTable one = single_type_classes(ten, {12.0}, IndependentExp{1, 1}, 1.0, {1.0});
  EXPECT_NEAR(gamma_effective(ten, one, GammaConvention::kErlang)[1][0], 12.0 * (1 - direct(10, 12)), 1e-12);
}

TEST(StochasticsProperty, MonotoneConcaveAndBounded) {
  for (const auto& j : all_families()) {
    double prev = 0.0;
    for (int k = 1; k <= 400; ++k) {
      double x = 0.01 * k;
      double gx = g_value(1.7, j, x);
      EXPECT_GE(gx, prev - 1e-15);
      double mid = g_value(1.7, j, x - 0.005);
      EXPECT_GE(mid + 1e-14, 0.5 * (prev + gx));
      EXPECT_LE(gx, 1.7 * std::min(mean_d(j) * x, mean_b(j)) + 1e-14);
      prev = gx;
    }
  }
}

TEST(StochasticsProperty, DerivativeMatchesFiniteDifference) {
  for (const auto& j : all_families()) {
    for (double x : {0.013, 0.4, 1.7}) {
      double h = 1e-7;
      double fd = (g_value(1.0, j, x + h) - g_value(1.0, j, x)) / h;
      EXPECT_NEAR(g_derivative(1.0, j, x), fd, 1e-5) << "variant " << j.index();
    }
  }
}

TEST(StochasticsProperty, EmpiricalFromExpSamplesMatchesClosedForm) {
  Oracle o(7);
  Empirical emp;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    McDraw d = o.draw(IndependentExp{1, 1});
    emp.samples.push_back({d.b, d.d});
  }
  for (double x : {0.2, 1.0, 3.0}) {
    double s = 0, s2 = 0;
    for (auto [b, d] : emp.samples) {
      double v = std::min(d * x, b);
      s += v;
      s2 += v * v;
    }
    double se = std::sqrt((s2 / n - (s / n) * (s / n)) / n);
    EXPECT_LE(std::abs(g_value(1.0, emp, x) - g_value(1.0, IndependentExp{1, 1}, x)), 3 * se);
  }
}

TEST(StochasticsProperty, JointTailMonotone) {
  for (const auto& j : all_families()) {
    EXPECT_NEAR(joint_tail(j, 0, 0), 1.0, 1e-12);
    for (double b = 0; b < 3; b += 0.25) {
      for (double d = 0; d < 3; d += 0.25) {
        EXPECT_LE(joint_tail(j, b + 0.25, d), joint_tail(j, b, d) + 1e-12);
        EXPECT_LE(joint_tail(j, b, d + 0.25), joint_tail(j, b, d) + 1e-12);
      }
    }
  }
}

TEST(StochasticsTest, ValidationRejectsBadLaws) {
  EXPECT_THROW(validate(JointBD{ParetoRatio{1.0, 1.0, {}}}), ParameterError);
  EXPECT_THROW(validate(JointBD{DiscreteRatio{{0.1, 0.2}, {0.5, 0.6}, {}}}), ParameterError);
  EXPECT_THROW(validate(JointBD{IndependentExp{0.0, 1.0}}), ParameterError);
  EXPECT_THROW(validate(JointBD{Empirical{}}), ParameterError);
}

TEST(StochasticsTest, LibrarySamplerMeans) {
  Philox rng(42, stream_key(1, 0, StreamPurpose::kRequirement));
  for (const auto& j : all_families()) {
    double sb = 0, sd = 0;
    const int n = 400000;
    for (int k = 0; k < n; ++k) {
      auto [b, d] = sample_bd(j, rng);
      sb += b;
      sd += d;
    }
    EXPECT_NEAR(sd / n, mean_d(j), 0.02 * mean_d(j)) << j.index();
    if (!std::holds_alternative<ParetoRatio>(j)) EXPECT_NEAR(sb / n, mean_b(j), 0.02 * mean_b(j)) << j.index();
  }
}

TEST(RngTest, PhiloxKnownAnswer) {
  // Random123 known-answer vector for philox4x32-10, counter 0, key 0.
  Philox rng(0, 0);
  std::uint64_t first = rng.next_u64();
  std::uint64_t second = rng.next_u64();
  EXPECT_EQ(first, (static_cast<std::uint64_t>(0xe169c58du) << 32) | 0x6627e8d5u);
  EXPECT_EQ(second, (static_cast<std::uint64_t>(0x9b00dbd8u) << 32) | 0xbc57ac4cu);
}

TEST(RngTest, StreamsAreIndependentOfInterleaving) {
  Philox a(9, stream_key(1, 0, StreamPurpose::kArrival));
  Philox b(9, stream_key(2, 0, StreamPurpose::kArrival));
  double a1 = a.uniform();
  b.uniform();
  double a2 = a.uniform();
  Philox a_again(9, stream_key(1, 0, StreamPurpose::kArrival));
  EXPECT_EQ(a_again.uniform(), a1);
  EXPECT_EQ(a_again.uniform(), a2);
  EXPECT_NE(a1, Philox(9, stream_key(2, 0, StreamPurpose::kArrival)).uniform());
}

}  // namespace
}  // namespace evgrid
