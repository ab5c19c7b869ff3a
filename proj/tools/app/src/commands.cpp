#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <openssl/evp.h>

#include "evgrid/fluid.hpp"
#include "evgrid/loadflow.hpp"
#include "evgrid/productform.hpp"
#include "evgrid/simulator.hpp"
#include "evgrid/weights.hpp"
#include "evgrid_app/app.hpp"

namespace evgrid::app {
namespace {

std::string fmt_int(long v) { return std::to_string(v); }

// Mean and 95% Student-t half-width of independent replicate values.
std::pair<double, double> mean_ci(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  boost::math::students_t t(n - 1.0);
  return {m, boost::math::quantile(boost::math::complement(t, 0.025)) * std::sqrt(ss / (n - 1.0) / n)};
}

CsvTable metric_table(const std::vector<std::pair<std::string, std::string>>& kv) {
  CsvTable t{{"metric", "value"}, {}};
  for (const auto& [k, v] : kv) t.add({k, v});
  return t;
}

SimOptions sim_options(const Experiment& ex) {
  SimOptions o;
  o.model = ex.model;
  o.horizon = ex.run.horizon;
  o.warmup = ex.run.warmup;
  o.seed = ex.run.seed;
  o.batches = ex.run.batches;
  return o;
}

NodeTypeMatrix state_or_zero(const Experiment& ex) {
  return ex.run.state.empty() ? zeros_like(ex.net, ex.classes.type_count) : ex.run.state;
}

void require_fluid_model(LoadModel m) {
  if (m == LoadModel::kClosedForm) throw ConfigError("$.model", "fluid commands need distflow or ac");
}

CommandOutput cmd_simulate(const Experiment& ex, const CommandOptions& opt) {
  std::vector<SimMetrics> reps = simulate_replications(ex.net, ex.classes, sim_options(ex), ex.run.replications, opt.jobs);
  const int J = ex.classes.type_count;
  CsvTable classes{{"replication", "node", "type", "mean_z", "ci_z", "mean_q", "ci_q", "success_from_means",
                    "success_from_counts"},
                   {}};
  CsvTable summary{{"replication", "seed", "events", "generated", "blocked", "admitted", "completed",
                    "expired_uncharged", "departed_charged", "agg_success"},
                   {}};
  for (size_t r = 0; r < reps.size(); ++r) {
    const SimMetrics& m = reps[r];
    SuccessEstimate s = success_fraction_estimate(m);
    for (int i = 1; i < ex.net.size(); ++i) {
      for (int j = 0; j < J; ++j) {
        classes.add({fmt_int(static_cast<long>(r)), fmt_int(ex.net.label[i]), fmt_int(j), fmt(m.mean_z[i][j]),
                     fmt(m.ci_z[i][j]), fmt(m.mean_q[i][j]), fmt(m.ci_q[i][j]), fmt(s.from_means[i][j]),
                     fmt(s.from_counts[i][j])});
      }
    }
    const EventCounts& c = m.counts;
    summary.add({fmt_int(static_cast<long>(r)), std::to_string(m.seed), fmt_int(c.events), fmt_int(c.generated),
                 fmt_int(c.blocked), fmt_int(c.admitted), fmt_int(c.completed), fmt_int(c.expired_uncharged),
                 fmt_int(c.departed_charged), fmt(aggregate_success_from_counts(m))});
  }
  if (reps.size() > 1) {
    for (int i = 1; i < ex.net.size(); ++i) {
      for (int j = 0; j < J; ++j) {
        std::vector<double> z, q;
        for (const auto& m : reps) {
          z.push_back(m.mean_z[i][j]);
          q.push_back(m.mean_q[i][j]);
        }
        auto [mz, cz] = mean_ci(z);
        auto [mq, cq] = mean_ci(q);
        classes.add({"all", fmt_int(ex.net.label[i]), fmt_int(j), fmt(mz), fmt(cz), fmt(mq), fmt(cq),
                     fmt(mq > 0 ? 1.0 - mz / mq : NAN), ""});
      }
    }
  }
  CommandOutput out;
  out.files.push_back({"simulate.csv", classes});
  out.files.push_back({"simulate_summary.csv", summary});
  out.notes.push_back("simulate: " + std::to_string(reps.size()) + " replication(s), " +
                      std::to_string(reps[0].counts.events) + " events in the first");
  return out;
}

CommandOutput cmd_fluid_transient(const Experiment& ex) {
  require_fluid_model(ex.model);
  PicardOptions po;
  po.model = ex.model;
  po.dt = ex.run.dt;
  FluidTrajectory tr = picard_solve(ex.net, ex.classes, make_state(ex.net, state_or_zero(ex)), ex.run.fluid_horizon, po);
  CsvTable t{{"t", "node", "type", "z", "q", "service"}, {}};
  for (size_t k = 0; k < tr.t.size(); ++k) {
    for (int i = 1; i < ex.net.size(); ++i) {
      for (int j = 0; j < ex.classes.type_count; ++j) {
        t.add({fmt(tr.t[k]), fmt_int(ex.net.label[i]), fmt_int(j), fmt(tr.z[k][i][j]), fmt(tr.q[k][i][j]),
               fmt(tr.service[k][i][j])});
      }
    }
  }
  CommandOutput out;
  out.files.push_back({"fluid_transient.csv", t});
  out.files.push_back({"fluid_transient_summary.csv",
                       metric_table({{"iterations", fmt_int(tr.iterations)},
                                     {"last_change", fmt(tr.last_change)},
                                     {"grid_points", fmt_int(static_cast<long>(tr.t.size()))}})});
  out.notes.push_back("fluid-transient: " + std::to_string(tr.iterations) + " Picard iterations, last change " +
                      fmt(tr.last_change));
  return out;
}

InvariantPoint solve_invariant(const Experiment& ex) {
  require_fluid_model(ex.model);
  InvariantOptions io;
  io.gamma = ex.run.gamma;
  return invariant_solve(ex.net, ex.classes, ex.model, io);
}

CommandOutput cmd_fluid_invariant(const Experiment& ex) {
  InvariantPoint pt = solve_invariant(ex);
  CsvTable t{{"node", "type", "gamma", "lam_star", "z_star", "p_star", "success_prob"}, {}};
  CsvTable nodes{{"node", "h_volt_lo", "h_volt_hi", "h_node"}, {}};
  for (int i = 1; i < ex.net.size(); ++i) {
    for (int j = 0; j < ex.classes.type_count; ++j) {
      t.add({fmt_int(ex.net.label[i]), fmt_int(j), fmt(pt.gamma[i][j]), fmt(pt.lam_star[i][j]), fmt(pt.z_star[i][j]),
             fmt(pt.p_star[i][j]), fmt(pt.success_prob[i][j])});
    }
    nodes.add({fmt_int(ex.net.label[i]), fmt(pt.h_volt_lo[i]), fmt(pt.h_volt_hi[i]), fmt(pt.h_node[i])});
  }
  CommandOutput out;
  out.files.push_back({"invariant.csv", t});
  out.files.push_back({"invariant_nodes.csv", nodes});
  out.files.push_back({"invariant_summary.csv", metric_table({{"objective", fmt(pt.objective)},
                                                              {"little_residual", fmt(pt.little_residual)},
                                                              {"kkt_residual", fmt(pt.kkt_residual)},
                                                              {"exactness_gap", fmt(pt.exactness_gap)},
                                                              {"support_condition_ok", pt.support_condition_ok ? "1" : "0"}})});
  out.notes.push_back("fluid-invariant: objective " + fmt(pt.objective) + ", KKT residual " + fmt(pt.kkt_residual));
  return out;
}

Allocation allocation_at_state(const Experiment& ex) {
  if (ex.run.state.empty()) throw ConfigError("$.run.state", "required for this command");
  return allocate(ex.model, ex.net, ex.classes, make_state(ex.net, ex.run.state));
}

CommandOutput cmd_allocate(const Experiment& ex) {
  Allocation a = allocation_at_state(ex);
  CsvTable t{{"node", "type", "z", "p", "lam"}, {}};
  CsvTable nodes{{"node", "power", "w", "h_volt_lo", "h_volt_hi", "h_node"}, {}};
  for (int i = 1; i < ex.net.size(); ++i) {
    for (int j = 0; j < ex.classes.type_count; ++j) {
      t.add({fmt_int(ex.net.label[i]), fmt_int(j), fmt(ex.run.state[i][j]), fmt(a.p[i][j]), fmt(a.lam[i][j])});
    }
    nodes.add({fmt_int(ex.net.label[i]), fmt(a.node_power[i]), fmt(a.w.empty() ? NAN : a.w[i]), fmt(a.h_volt_lo[i]),
               fmt(a.h_volt_hi[i]), fmt(a.h_node[i])});
  }
  CommandOutput out;
  out.files.push_back({"allocation.csv", t});
  out.files.push_back({"allocation_nodes.csv", nodes});
  out.files.push_back({"allocation_summary.csv", metric_table({{"model", to_string(ex.model)},
                                                               {"kkt_residual", fmt(a.kkt_residual)},
                                                               {"exactness_gap", fmt(a.exactness_gap)},
                                                               {"gap_flag", a.gap_flag ? "1" : "0"}})});
  out.notes.push_back("allocate: KKT residual " + fmt(a.kkt_residual));
  return out;
}

CommandOutput cmd_loadflow_check(const Experiment& ex) {
  NodePower lam(ex.net.size(), 0.0);
  if (!ex.run.power.empty()) {
    for (int i = 1; i < ex.net.size(); ++i) lam[i] = ex.run.power[i - 1];
  } else {
    lam = allocation_at_state(ex).node_power;
  }
  DominationReport rep = check_domination(ex.net, lam);
  AcSolution ac = ac_solve(ex.net, lam);
  CsvTable t{{"node", "power", "w_distflow", "w_ac", "gap", "dominated"}, {}};
  for (int i = 1; i < ex.net.size(); ++i) {
    bool bad = std::find(rep.violations.begin(), rep.violations.end(), i) != rep.violations.end();
    t.add({fmt_int(ex.net.label[i]), fmt(lam[i]), fmt(rep.w_lin[i]), fmt(rep.w_ac[i]), fmt(rep.gap[i]), bad ? "0" : "1"});
  }
  CommandOutput out;
  out.files.push_back({"loadflow.csv", t});
  out.files.push_back({"loadflow_summary.csv",
                       metric_table({{"dominated", rep.ok ? "1" : "0"},
                                     {"ac_iterations", fmt_int(ac.iterations)},
                                     {"kvl_residual", fmt(kvl_residual(ex.net, ac))},
                                     {"energy_balance_residual", fmt(energy_balance_residual(ex.net, lam, ac))}})});
  out.notes.push_back(std::string("loadflow-check: AC voltages ") + (rep.ok ? "dominated by" : "exceed") +
                      " the linearized ones");
  return out;
}

CommandOutput cmd_product_form(const Experiment& ex) {
  ProductFormCheck r = validate_against_simulation(ex.net, ex.classes, ex.run.horizon, ex.run.seed, ex.run.warmup);
  CsvTable t;
  for (int i = 1; i < ex.net.size(); ++i) t.header.push_back("n" + std::to_string(ex.net.label[i]));
  t.header.push_back("p_sim");
  t.header.push_back("p_formula");
  std::map<StateKey, std::pair<double, double>> rows;
  for (const auto& [k, p] : r.metrics.states) rows[k].first = p;
  for (const auto& [k, p] : product_form_table(r.loads, 1e-6)) rows[k].second = p;
  for (auto& [k, pp] : rows) {
    if (pp.second == 0.0) pp.second = stationary_probability(r.loads, k);
    std::vector<std::string> row;
    for (int n : k) row.push_back(fmt_int(n));
    row.push_back(fmt(pp.first));
    row.push_back(fmt(pp.second));
    t.add(row);
  }
  CommandOutput out;
  out.files.push_back({"product_form.csv", t});
  out.files.push_back({"product_form_summary.csv", metric_table({{"tv", fmt(r.tv)},
                                                                 {"lumped_mass", fmt(r.lumped_mass)},
                                                                 {"states_compared", fmt_int(r.states_compared)},
                                                                 {"k_used", fmt(r.k_used)},
                                                                 {"rho_total", fmt(r.loads.rho_total)},
                                                                 {"events", fmt_int(r.metrics.counts.events)}})});
  out.notes.push_back("product-form: total variation " + fmt(r.tv) + " at rho " + fmt(r.loads.rho_total));
  return out;
}

CommandOutput cmd_optimize_weights(const Experiment& ex, const CommandOptions& opt) {
  std::vector<double> gamma;
  for (int i = 1; i < ex.net.size(); ++i) {
    double g = 0.0;
    for (int j = 0; j < ex.classes.type_count; ++j) g += ex.classes.lambda[i][j];
    gamma.push_back(g);
  }
  const double md = mean_d(ex.classes.joint[0]);
  WeightSolution s;
  if (opt.ratio == "pareto") {
    s = solve_pareto_ratio(make_weight_problem(ex.net, gamma, md, RatioLaw::pareto_with_mean(ex.run.pareto_shape, ex.run.ratio_mean)));
  } else if (opt.ratio == "det") {
    s = solve_deterministic_ratio(make_weight_problem(ex.net, gamma, md, RatioLaw::deterministic(ex.run.ratio_mean)));
  } else if (opt.ratio == "bound") {
    s = lower_bound_construction(make_weight_problem(ex.net, gamma, md, RatioLaw::deterministic(ex.run.ratio_mean)));
  } else {
    throw ConfigError("--ratio", "expected det, pareto or bound");
  }
  WeightProblem prob = make_weight_problem(ex.net, gamma, md, RatioLaw::deterministic(1.0));
  CsvTable t{{"node", "w", "c", "selected", "success_rate"}, {}};
  for (int i = 1; i < ex.net.size(); ++i) {
    const size_t k = static_cast<size_t>(i - 1);
    t.add({fmt_int(ex.net.label[i]), fmt(s.w[k]), fmt(s.c[k]), s.selected[k] ? "1" : "0", fmt(s.success_rate[k])});
  }
  CommandOutput out;
  out.files.push_back({"weights.csv", t});
  out.files.push_back({"weights_summary.csv", metric_table({{"solver", to_string(s.kind)},
                                                            {"ratio", opt.ratio},
                                                            {"objective", fmt(s.objective)},
                                                            {"constraint_lhs", fmt(s.constraint_lhs)},
                                                            {"slack", fmt(s.slack)},
                                                            {"overload", fmt(prob.overload() * ex.run.ratio_mean)},
                                                            {"kkt_residual", fmt(s.kkt_residual)}})});
  out.notes.push_back("optimize-weights (" + opt.ratio + "): objective " + fmt(s.objective));
  return out;
}

CommandOutput cmd_compare(const Experiment& ex, const CommandOptions& opt) {
  std::vector<CompareRow> rows = compare_rows(ex, opt.jobs);
  CsvTable t{{"node", "sim_mean_z", "fluid_z_star", "rel_err"}, {}};
  CsvTable d{{"node", "sim_mean_z", "sim_ci", "fluid_z_star", "rel_err"}, {}};
  double worst = 0.0;
  for (const auto& r : rows) {
    t.add({fmt_int(r.node), fmt(r.sim_mean_z), fmt(r.fluid_z_star), fmt(r.rel_err)});
    d.add({fmt_int(r.node), fmt(r.sim_mean_z), fmt(r.sim_ci), fmt(r.fluid_z_star), fmt(r.rel_err)});
    worst = std::max(worst, r.rel_err);
  }
  CommandOutput out;
  out.files.push_back({"compare.csv", t});
  out.files.push_back({"compare_detail.csv", d});
  out.notes.push_back("compare: largest relative error " + fmt(worst));
  return out;
}

CommandOutput scenario_two_type(const Experiment& ex) {
  InvariantPoint pt = solve_invariant(ex);
  CsvTable t{{"node", "type", "theta", "lam_star", "p_star", "pct_desired"}, {}};
  for (int i = 1; i < ex.net.size(); ++i) {
    for (int j = 0; j < ex.classes.type_count; ++j) {
      const auto* d = std::get_if<DeterministicRatio>(&ex.classes.joint[j]);
      if (!d) throw ConfigError("$.classes.types[" + std::to_string(j) + "].law", "case-two-type needs deterministic-ratio laws");
      t.add({fmt_int(ex.net.label[i]), fmt_int(j), fmt(d->theta), fmt(pt.lam_star[i][j]), fmt(pt.p_star[i][j]),
             fmt(100.0 * std::min(pt.p_star[i][j], d->theta) / d->theta)});
    }
  }
  CommandOutput out;
  out.files.push_back({"two_type.csv", t});
  out.notes.push_back("case-two-type: invariant point on " + std::to_string(ex.net.node_count) + " nodes");
  return out;
}

CommandOutput scenario_discrete_ratio(const Experiment& ex) {
  const auto* d = std::get_if<DiscreteRatio>(&ex.classes.joint[0]);
  if (!d || ex.classes.type_count != 1) {
    throw ConfigError("$.classes.types", "case-discrete-ratio needs one discrete-ratio type");
  }
  double mean_theta = 0.0;
  for (size_t k = 0; k < d->thetas.size(); ++k) mean_theta += d->thetas[k] * d->probs[k];
  InvariantPoint pt = solve_invariant(ex);
  CsvTable t{{"node", "lam_star", "lam_over_mean_theta", "p_star", "success_prob"}, {}};
  double num = 0.0, den = 0.0;
  for (int i = 1; i < ex.net.size(); ++i) {
    t.add({fmt_int(ex.net.label[i]), fmt(pt.lam_star[i][0]), fmt(pt.lam_star[i][0] / mean_theta), fmt(pt.p_star[i][0]),
           fmt(pt.success_prob[i][0])});
    num += pt.gamma[i][0] * pt.success_prob[i][0];
    den += pt.gamma[i][0];
  }
  CommandOutput out;
  out.files.push_back({"discrete_ratio.csv", t});
  out.files.push_back({"discrete_ratio_summary.csv", metric_table({{"agg_success", fmt(den > 0 ? num / den : NAN)},
                                                                   {"mean_theta", fmt(mean_theta)}})});
  out.notes.push_back("case-discrete-ratio: aggregated success " + fmt(den > 0 ? num / den : NAN));
  return out;
}

CommandOutput scenario_markov_sweep(const Experiment& ex, const CommandOptions& opt) {
  std::vector<SweepPoint> pts = markov_sweep(ex, opt.jobs);
  CsvTable t{{"lambda", "dep_rate", "agg_success"}, {}};
  CsvTable d{{"lambda", "dep_rate", "agg_success", "ci", "bound", "departures"}, {}};
  for (const auto& p : pts) {
    t.add({fmt(p.lambda), fmt(p.dep_rate), fmt(p.agg_success)});
    d.add({fmt(p.lambda), fmt(p.dep_rate), fmt(p.agg_success), fmt(p.ci), fmt(p.bound), fmt_int(p.departures)});
  }
  CommandOutput out;
  out.files.push_back({"markov_sweep.csv", t});
  out.files.push_back({"markov_sweep_detail.csv", d});
  out.notes.push_back("case-markov-sweep: " + std::to_string(pts.size()) + " grid points");
  return out;
}

// Runs f(k) for k in [0, n) on up to `jobs` threads; rethrows the first error.
template <class F>
void parallel_for(int n, int jobs, F f) {
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&] {
    for (int k = next++; k < n; k = next++) {
      try {
        f(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(std::max(jobs, 1), n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);
  return buf;
}

void CsvTable::add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

std::string CsvTable::str() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t k = 0; k < cells.size(); ++k) out << (k ? "," : "") << cells[k];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "fluid-transient", "fluid-invariant", "allocate",
                                              "loadflow-check", "product-form", "optimize-weights", "compare"};
  return names;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"case-two-type", "case-discrete-ratio", "case-markov-sweep"};
  return names;
}

json scenario_config(const std::string& name) {
  // Ten-node feeder, one parking space per node, node cap 8, c_max = 1,
  // 10% voltage drop, proportional fairness.
  json net = {{"tree", {{"nodes", 10}, {"seed", 47}, {"r_lo", 0.004}, {"r_hi", 0.012}}},
              {"k_spaces", 1},
              {"m_cap", 8},
              {"voltage_drop_pct", 0.1}};
  json exp_d = {{"kind", "exponential"}, {"mean", 1.0}};
  // Low per-unit base for the small-demand presets so the feeder is overloaded.
  json heavy = net;
  heavy["tree"]["r_lo"] = 1.0;
  heavy["tree"]["r_hi"] = 2.0;
  if (name == "case-two-type") {
    return {{"network", heavy},
            {"classes",
             {{"types",
               {{{"law", {{"kind", "deterministic-ratio"}, {"theta", 0.02}, {"d", exp_d}}}, {"c_max", 1}, {"share", 0.4}},
                {{"law", {{"kind", "deterministic-ratio"}, {"theta", 0.01}, {"d", exp_d}}}, {"c_max", 1}, {"share", 0.6}}}},
              {"lambda", 1.2},
              {"weights", "unit"}}},
            {"model", "distflow"}};
  }
  if (name == "case-discrete-ratio") {
    return {{"network", heavy},
            {"classes",
             {{"types",
               {{{"law", {{"kind", "discrete-ratio"}, {"thetas", {0.001, 0.02}}, {"probs", {0.1, 0.9}}, {"d", exp_d}}},
                 {"c_max", 1}}}},
              {"lambda", 1.2},
              {"weights", "unit"}}},
            {"model", "distflow"}};
  }
  if (name == "case-markov-sweep") {
    json sweep = net;
    sweep["tree"]["r_lo"] = 0.02;
    sweep["tree"]["r_hi"] = 0.05;
    return {{"network", sweep},
            {"classes",
             {{"types", {{{"law", {{"kind", "exponential"}, {"mean_b", 1.0}, {"mean_d", 1.0}}}, {"c_max", 1}}}},
              {"lambda_total", 1.0},
              {"weights", "unit"}}},
            {"model", "distflow"},
            {"run",
             {{"horizon", 4000},
              {"replications", 4},
              {"seed", 1},
              {"lambdas", {0.25, 1, 4, 16, 64}},
              {"dep_rates", {0.25, 0.5, 1, 2, 4}}}}};
  }
  throw ConfigError("scenario", "unknown scenario '" + name + "'");
}

std::vector<CompareRow> compare_rows(const Experiment& ex, int jobs) {
  InvariantPoint pt = solve_invariant(ex);
  std::vector<SimMetrics> reps = simulate_replications(ex.net, ex.classes, sim_options(ex), ex.run.replications, jobs);
  std::vector<CompareRow> out;
  for (int i = 1; i < ex.net.size(); ++i) {
    std::vector<double> z;
    for (const auto& m : reps) {
      double s = 0.0;
      for (int j = 0; j < ex.classes.type_count; ++j) s += m.mean_z[i][j];
      z.push_back(s);
    }
    CompareRow r;
    r.node = ex.net.label[i];
    if (reps.size() > 1) {
      std::tie(r.sim_mean_z, r.sim_ci) = mean_ci(z);
    } else {
      r.sim_mean_z = z[0];
      // Batch-means half-widths of the types, combined as if independent.
      double v = 0.0;
      for (int j = 0; j < ex.classes.type_count; ++j) v += reps[0].ci_z[i][j] * reps[0].ci_z[i][j];
      r.sim_ci = std::sqrt(v);
    }
    for (int j = 0; j < ex.classes.type_count; ++j) r.fluid_z_star += pt.z_star[i][j];
    r.rel_err = r.sim_mean_z > 0 ? std::abs(r.fluid_z_star - r.sim_mean_z) / r.sim_mean_z : NAN;
    out.push_back(r);
  }
  return out;
}

std::vector<SweepPoint> markov_sweep(const Experiment& ex, int jobs) {
  if (ex.run.lambdas.empty()) throw ConfigError("$.run.lambdas", "required for the sweep");
  if (ex.run.dep_rates.empty()) throw ConfigError("$.run.dep_rates", "required for the sweep");
  if (ex.classes.type_count != 1) throw ConfigError("$.classes.types", "the sweep uses a single type");
  const double eb = mean_b(ex.classes.joint[0]);
  const double c_max = ex.classes.c_max[0];
  const int I = ex.net.node_count;
  std::vector<SweepPoint> pts;
  for (double lam : ex.run.lambdas) {
    for (double dep : ex.run.dep_rates) pts.push_back({lam, dep, 0.0, 0.0, 0.0, 0});
  }
  // Validate every grid point before running any of them.
  std::vector<ClassTable> tables;
  for (auto& p : pts) {
    ClassTable c = ex.classes;
    c.joint[0] = IndependentExp{eb, 1.0 / p.dep_rate};
    for (int i = 1; i <= I; ++i) c.lambda[i][0] = p.lambda / I;
    validate(ex.net, c);
    p.bound = std::isfinite(c_max) ? success_probability(c.joint[0], c_max) : 1.0;
    tables.push_back(std::move(c));
  }
  SimOptions o = sim_options(ex);
  parallel_for(static_cast<int>(pts.size()), jobs, [&](int k) {
    std::vector<SimMetrics> reps = simulate_replications(ex.net, tables[static_cast<size_t>(k)], o, ex.run.replications, 1);
    std::vector<double> s;
    long deps = 0;
    for (const auto& m : reps) {
      s.push_back(aggregate_success_from_counts(m));
      for (int i = 1; i <= I; ++i) deps += static_cast<long>(m.departures[i][0]);
    }
    auto [mean, ci] = mean_ci(s);
    pts[static_cast<size_t>(k)].agg_success = mean;
    pts[static_cast<size_t>(k)].ci = ci;
    pts[static_cast<size_t>(k)].departures = deps;
  });
  return pts;
}

CommandOutput run_command(const std::string& command, const Experiment& ex, const CommandOptions& options) {
  if (command == "simulate") return cmd_simulate(ex, options);
  if (command == "fluid-transient") return cmd_fluid_transient(ex);
  if (command == "fluid-invariant") return cmd_fluid_invariant(ex);
  if (command == "allocate") return cmd_allocate(ex);
  if (command == "loadflow-check") return cmd_loadflow_check(ex);
  if (command == "product-form") return cmd_product_form(ex);
  if (command == "optimize-weights") return cmd_optimize_weights(ex, options);
  if (command == "compare") return cmd_compare(ex, options);
  if (command == "scenario") {
    if (options.scenario == "case-two-type") return scenario_two_type(ex);
    if (options.scenario == "case-discrete-ratio") return scenario_discrete_ratio(ex);
    if (options.scenario == "case-markov-sweep") return scenario_markov_sweep(ex, options);
    throw ConfigError("scenario", "unknown scenario '" + options.scenario + "'");
  }
  throw ConfigError("command", "unknown command '" + command + "'");
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[md[k] >> 4]);
    out.push_back(hex[md[k] & 15]);
  }
  return out;
}

}  // namespace evgrid::app
