#include "evgrid_app/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

namespace evgrid::app {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Object view that records which keys were read and rejects the rest.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at_path(const std::string& key) const { return path_ + "." + key; }

  const json& get(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(at_path(key), "missing required field");
    return j_.at(key);
  }

  double number(const std::string& key, double fallback, bool allow_inf = false) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return to_number(j_.at(key), at_path(key), allow_inf);
  }

  double number(const std::string& key) {
    seen_.insert(key);
    return to_number(get(key), at_path(key), false);
  }

  std::string string(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    if (!j_.at(key).is_string()) throw ConfigError(at_path(key), "expected a string");
    return j_.at(key).get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return {};
    return to_numbers(j_.at(key), at_path(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(at_path(key), "unknown field");
    }
  }

  static double to_number(const json& v, const std::string& path, bool allow_inf) {
    if (allow_inf && (v.is_null() || (v.is_string() && v.get<std::string>() == "inf"))) return kInf;
    if (!v.is_number()) throw ConfigError(path, allow_inf ? "expected a number, null or \"inf\"" : "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
    return d;
  }

  static std::vector<double> to_numbers(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (size_t k = 0; k < v.size(); ++k) out.push_back(to_number(v[k], path + "[" + std::to_string(k) + "]", false));
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

DurationLaw parse_duration(const json& j, const std::string& path) {
  Obj o(j, path);
  DurationLaw d;
  std::string kind = o.string("kind", "exponential");
  if (kind == "exponential") {
    d.kind = DurationLaw::Kind::kExponential;
  } else if (kind == "deterministic") {
    d.kind = DurationLaw::Kind::kDeterministic;
  } else {
    throw ConfigError(o.at_path("kind"), "expected \"exponential\" or \"deterministic\"");
  }
  d.mean = o.number("mean", 1.0);
  require(d.mean > 0, o.at_path("mean"), "must be positive");
  o.finish();
  return d;
}

JointBD parse_law(const json& j, const std::string& path) {
  Obj o(j, path);
  std::string kind = o.string("kind", "");
  auto duration = [&] { return o.has("d") ? parse_duration(o.get("d"), o.at_path("d")) : DurationLaw{}; };
  JointBD law;
  if (kind == "exponential") {
    law = IndependentExp{o.number("mean_b", 1.0), o.number("mean_d", 1.0)};
  } else if (kind == "deterministic-ratio") {
    law = DeterministicRatio{o.number("theta"), duration()};
  } else if (kind == "discrete-ratio") {
    DiscreteRatio d;
    d.thetas = o.numbers("thetas");
    d.probs = o.numbers("probs");
    d.d = duration();
    law = d;
  } else if (kind == "pareto-ratio") {
    ParetoRatio p;
    p.a = o.number("a", 2.0);
    if (o.has("mean")) {
      require(!o.has("kappa"), o.at_path("mean"), "give either mean or kappa");
      p.kappa = o.number("mean") * (p.a - 1.0);
    } else {
      p.kappa = o.number("kappa", 1.0);
    }
    p.d = duration();
    law = p;
  } else if (kind == "empirical") {
    Empirical e;
    const json& s = o.get("samples");
    require(s.is_array(), o.at_path("samples"), "expected an array of [b, d] pairs");
    for (size_t k = 0; k < s.size(); ++k) {
      std::string p = o.at_path("samples") + "[" + std::to_string(k) + "]";
      std::vector<double> pair = Obj::to_numbers(s[k], p);
      require(pair.size() == 2, p, "expected [b, d]");
      e.samples.emplace_back(pair[0], pair[1]);
    }
    law = e;
  } else {
    throw ConfigError(o.at_path("kind"),
                      "expected exponential, deterministic-ratio, discrete-ratio, pareto-ratio or empirical");
  }
  o.finish();
  try {
    validate(law);
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  return law;
}

Network parse_network_block(const json& j, const std::string& base_dir) {
  const std::string path = "$.network";
  Obj o(j, path);
  NetworkOptions opt;
  opt.w00 = o.number("w00", opt.w00);
  opt.v_lo = o.number("v_lo", opt.v_lo);
  opt.v_hi = o.number("v_hi", opt.v_hi);
  if (o.has("voltage_drop_pct")) opt.voltage_drop_pct = o.number("voltage_drop_pct");
  for (double id : o.numbers("exclude")) opt.exclude.push_back(static_cast<int>(id));
  const bool has_k = o.has("k_spaces");
  const bool has_m = o.has("m_cap");
  double k_spaces = o.number("k_spaces", kInf, true);
  double m_cap = o.number("m_cap", kInf, true);

  int sources = static_cast<int>(o.has("file")) + static_cast<int>(o.has("line")) + static_cast<int>(o.has("tree"));
  require(sources == 1, path, "give exactly one of file, line, tree");
  Network net;
  try {
    if (o.has("file")) {
      std::filesystem::path f = o.string("file", "");
      if (f.is_relative()) f = std::filesystem::path(base_dir) / f;
      require(std::filesystem::exists(f), o.at_path("file"), "file not found: " + f.string());
      net = load_network(f.string(), opt);
    } else if (o.has("line")) {
      Obj line(o.get("line"), o.at_path("line"));
      std::vector<double> r = line.numbers("r");
      std::vector<double> x = line.has("x") ? line.numbers("x") : r;
      line.finish();
      require(!r.empty(), o.at_path("line") + ".r", "needs at least one edge");
      require(r.size() == x.size(), o.at_path("line") + ".x", "must match the length of r");
      net = make_line(r, x, k_spaces, m_cap, opt);
    } else {
      Obj tree(o.get("tree"), o.at_path("tree"));
      double nodes = tree.number("nodes");
      require(nodes >= 1 && nodes == std::floor(nodes), tree.at_path("nodes"), "must be a positive integer");
      double seed = tree.number("seed", 1.0);
      require(seed >= 0 && seed == std::floor(seed), tree.at_path("seed"), "must be a nonnegative integer");
      double r_lo = tree.number("r_lo", 0.002);
      double r_hi = tree.number("r_hi", 0.01);
      tree.finish();
      net = random_tree(static_cast<int>(nodes), static_cast<std::uint64_t>(seed), r_lo, r_hi, opt);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  o.finish();
  for (int i = 1; i < net.size(); ++i) {
    if (has_k || o.has("line") || o.has("tree")) net.k_spaces[i] = k_spaces;
    if (has_m || o.has("line") || o.has("tree")) net.m_cap[i] = m_cap;
  }
  return net;
}

ClassTable parse_classes(const json& j, const Network& net) {
  const std::string path = "$.classes";
  Obj o(j, path);
  const int I = net.node_count;

  const json& types = o.get("types");
  require(types.is_array() && !types.empty(), o.at_path("types"), "expected a nonempty array");
  ClassTable c;
  c.type_count = static_cast<int>(types.size());
  std::vector<double> share;
  double share_sum = 0.0;
  for (size_t k = 0; k < types.size(); ++k) {
    std::string tp = o.at_path("types") + "[" + std::to_string(k) + "]";
    Obj t(types[k], tp);
    c.joint.push_back(parse_law(t.get("law"), t.at_path("law")));
    c.c_max.push_back(t.number("c_max", kInf, true));
    require(c.c_max.back() > 0, t.at_path("c_max"), "must be positive");
    share.push_back(t.number("share", types.size() == 1 ? 1.0 : -1.0));
    require(share.back() >= 0, t.at_path("share"), "required for multiple types and must be nonnegative");
    share_sum += share.back();
    t.finish();
  }
  require(std::abs(share_sum - 1.0) <= 1e-9, o.at_path("types"), "shares must sum to 1");

  std::vector<double> lam(I, 0.0);
  const bool per_node = o.has("lambda");
  require(per_node != o.has("lambda_total"), path, "give exactly one of lambda, lambda_total");
  if (per_node) {
    const json& l = o.get("lambda");
    if (l.is_array()) {
      lam = Obj::to_numbers(l, o.at_path("lambda"));
      require(static_cast<int>(lam.size()) == I, o.at_path("lambda"), "needs one rate per node");
    } else {
      lam.assign(I, Obj::to_number(l, o.at_path("lambda"), false));
    }
  } else {
    lam.assign(I, o.number("lambda_total") / I);
  }
  for (int i = 0; i < I; ++i) require(lam[i] >= 0, o.at_path(per_node ? "lambda" : "lambda_total"), "must be nonnegative");

  std::vector<double> w(I, 1.0);
  if (o.has("weights")) {
    const json& wj = o.get("weights");
    if (wj.is_string()) {
      std::string s = wj.get<std::string>();
      if (s == "fairness") {
        w = fairness_weights(net);
      } else {
        require(s == "unit", o.at_path("weights"), "expected \"fairness\", \"unit\" or an array");
      }
    } else {
      w = Obj::to_numbers(wj, o.at_path("weights"));
      require(static_cast<int>(w.size()) == I, o.at_path("weights"), "needs one weight per node");
    }
  } else {
    w = fairness_weights(net);
  }

  Utility u;
  if (o.has("utility")) {
    const json& uj = o.get("utility");
    if (uj.is_string()) {
      require(uj.get<std::string>() == "log", o.at_path("utility"), "expected \"log\" or {\"power\": alpha}");
    } else {
      Obj uo(uj, o.at_path("utility"));
      u.form = UtilityForm::kPower;
      u.alpha = uo.number("power");
      uo.finish();
    }
  }
  o.finish();

  c.lambda = zeros_like(net, c.type_count);
  c.utility.assign(net.size(), std::vector<Utility>(c.type_count, u));
  for (int i = 1; i <= I; ++i) {
    for (int t = 0; t < c.type_count; ++t) {
      c.lambda[i][t] = lam[i - 1] * share[t];
      c.utility[i][t].weight = w[i - 1];
    }
  }
  try {
    validate(net, c);
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  return c;
}

NodeTypeMatrix parse_state(const json& j, const std::string& path, const Network& net, int J) {
  NodeTypeMatrix z = zeros_like(net, J);
  require(j.is_array(), path, "expected an array with one entry per node");
  require(static_cast<int>(j.size()) == net.node_count, path, "needs one entry per node");
  for (int i = 1; i <= net.node_count; ++i) {
    std::string p = path + "[" + std::to_string(i - 1) + "]";
    const json& e = j[i - 1];
    std::vector<double> row = e.is_array() ? Obj::to_numbers(e, p) : std::vector<double>{Obj::to_number(e, p, false)};
    require(static_cast<int>(row.size()) == J, p, "needs one count per type");
    for (int t = 0; t < J; ++t) {
      require(row[t] >= 0, p, "counts must be nonnegative");
      z[i][t] = row[t];
    }
  }
  return z;
}

RunSettings parse_run(const json& j, const Network& net, int J) {
  const std::string path = "$.run";
  Obj o(j, path);
  RunSettings r;
  r.horizon = o.number("horizon", r.horizon);
  require(r.horizon > 0, o.at_path("horizon"), "must be positive");
  r.warmup = o.number("warmup", r.warmup);
  require(r.warmup < r.horizon, o.at_path("warmup"), "must be below the horizon");
  if (o.has("seed")) {
    const json& s = o.get("seed");
    require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0), o.at_path("seed"),
            "must be a nonnegative integer");
    r.seed = s.get<std::uint64_t>();
  }
  double reps = o.number("replications", 1.0);
  require(reps >= 1 && reps == std::floor(reps), o.at_path("replications"), "must be a positive integer");
  r.replications = static_cast<int>(reps);
  double batches = o.number("batches", 20.0);
  require(batches >= 2 && batches == std::floor(batches), o.at_path("batches"), "must be an integer >= 2");
  r.batches = static_cast<int>(batches);
  r.dt = o.number("dt", 0.0);
  require(r.dt >= 0, o.at_path("dt"), "must be nonnegative");
  r.fluid_horizon = o.number("fluid_horizon", r.fluid_horizon);
  require(r.fluid_horizon > 0, o.at_path("fluid_horizon"), "must be positive");
  std::string gamma = o.string("gamma", "erlang");
  if (gamma == "erlang") {
    r.gamma = GammaConvention::kErlang;
  } else if (gamma == "blocking-cap") {
    r.gamma = GammaConvention::kBlockingCap;
  } else {
    throw ConfigError(o.at_path("gamma"), "expected \"erlang\" or \"blocking-cap\"");
  }
  if (o.has("state")) r.state = parse_state(o.get("state"), o.at_path("state"), net, J);
  r.power = o.numbers("power");
  require(r.power.empty() || static_cast<int>(r.power.size()) == net.node_count, o.at_path("power"),
          "needs one injection per node");
  r.lambdas = o.numbers("lambdas");
  r.dep_rates = o.numbers("dep_rates");
  for (double v : r.lambdas) require(v > 0, o.at_path("lambdas"), "rates must be positive");
  for (double v : r.dep_rates) require(v > 0, o.at_path("dep_rates"), "rates must be positive");
  r.ratio_mean = o.number("ratio_mean", r.ratio_mean);
  require(r.ratio_mean > 0, o.at_path("ratio_mean"), "must be positive");
  r.pareto_shape = o.number("pareto_shape", r.pareto_shape);
  require(r.pareto_shape > 1, o.at_path("pareto_shape"), "must exceed 1");
  o.finish();
  return r;
}

}  // namespace

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

Experiment load_experiment(const json& doc, const std::string& base_dir) {
  Obj root(doc, "$");
  Experiment ex;
  ex.doc = doc;
  ex.net = parse_network_block(root.get("network"), base_dir);
  ex.classes = parse_classes(root.get("classes"), ex.net);
  std::string model = root.string("model", "distflow");
  try {
    ex.model = parse_load_model(model);
  } catch (const Error&) {
    throw ConfigError("$.model", "expected distflow, ac or closed-form");
  }
  ex.run = root.has("run") ? parse_run(root.get("run"), ex.net, ex.classes.type_count)
                           : parse_run(json::object(), ex.net, ex.classes.type_count);
  root.finish();
  return ex;
}

json number_or_inf(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

}  // namespace evgrid::app
