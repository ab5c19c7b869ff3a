#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "evgrid/allocator.hpp"
#include "evgrid/fluid.hpp"
#include "evgrid/loadflow.hpp"
#include "evgrid/simulator.hpp"
#include "evgrid/weights.hpp"

namespace evgrid {
namespace {

ClassTable fair(const Network& net, double lam, double c_max) {
  std::vector<double> l(net.node_count, lam);
  return single_type_classes(net, l, IndependentExp{1, 1}, c_max, fairness_weights(net));
}

StateZ ramp_state(const Network& net) {
  NodeTypeMatrix m = zeros_like(net, 1);
  for (int i = 1; i < net.size(); ++i) m[i][0] = 1.0 + (i % 5);
  return make_state(net, m);
}

void BM_AllocateDistflow(benchmark::State& st) {
  Network net = random_tree(static_cast<int>(st.range(0)), 5, 0.002, 0.02);
  ClassTable c = fair(net, 1.0, 1.0);
  StateZ s = ramp_state(net);
  for (auto _ : st) benchmark::DoNotOptimize(allocate_distflow(net, c, s));
}
BENCHMARK(BM_AllocateDistflow)->Arg(5)->Arg(10)->Arg(20)->Arg(40)->Unit(benchmark::kMicrosecond);

void BM_AllocateAc(benchmark::State& st) {
  Network net = random_tree(static_cast<int>(st.range(0)), 5, 0.002, 0.02);
  ClassTable c = fair(net, 1.0, 1.0);
  StateZ s = ramp_state(net);
  for (auto _ : st) benchmark::DoNotOptimize(allocate_ac(net, c, s));
}
BENCHMARK(BM_AllocateAc)->Arg(5)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_AcLoadFlow(benchmark::State& st) {
  Network net = random_tree(static_cast<int>(st.range(0)), 5, 0.001, 0.005);
  NodePower p(net.size(), 5.0 / st.range(0));
  p[0] = 0.0;
  for (auto _ : st) benchmark::DoNotOptimize(ac_solve(net, p));
}
BENCHMARK(BM_AcLoadFlow)->Arg(10)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_InvariantSolve(benchmark::State& st) {
  Network net = random_tree(static_cast<int>(st.range(0)), 3, 0.005, 0.02);
  ClassTable c = fair(net, 3.0, 1.0);
  for (auto _ : st) benchmark::DoNotOptimize(invariant_solve(net, c, LoadModel::kDistflow));
}
BENCHMARK(BM_InvariantSolve)->Arg(2)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_SimulateTwoNode(benchmark::State& st) {
  Network net = make_line({0.01, 0.005}, {0.01, 0.005}, 10, INFINITY);
  ClassTable c = fair(net, 12.0, INFINITY);
  SimOptions o;
  o.horizon = static_cast<double>(st.range(0));
  o.seed = 1;
  for (auto _ : st) benchmark::DoNotOptimize(simulate(net, c, o));
}
BENCHMARK(BM_SimulateTwoNode)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Knapsack(benchmark::State& st) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  int n = static_cast<int>(st.range(0));
  std::vector<double> v(n), w(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = u(rng);
    w[i] = u(rng);
    total += w[i];
  }
  for (auto _ : st) benchmark::DoNotOptimize(solve_knapsack(v, w, 0.5 * total));
}
BENCHMARK(BM_Knapsack)->Arg(10)->Arg(20)->Arg(40)->Arg(200)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace evgrid

BENCHMARK_MAIN();
