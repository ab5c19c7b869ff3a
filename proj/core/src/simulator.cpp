#include "evgrid/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>
#include <unordered_map>
#include <utility>

#include <boost/math/distributions/students_t.hpp>

#include "evgrid/errors.hpp"
#include "evgrid/rng.hpp"

namespace evgrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Ev {
  int node = 0;
  int type = 0;
  double level = 0.0;  // class service level at which the EV is fully charged
  double deadline = 0.0;
  double arrival = 0.0;
  bool charged = false;
};

[[noreturn]] void rethrow_at(double t) {
  std::string at = "at t=" + std::to_string(t) + ": ";
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(at + e.what(), e.gap());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(at + e.what());
  } catch (const RangeError& e) {
    throw RangeError(at + e.what());
  } catch (const StabilityError& e) {
    throw StabilityError(at + e.what());
  } catch (const PreconditionError& e) {
    throw PreconditionError(at + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(at + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(at + e.what());
  }
}

class Simulation {
 public:
  Simulation(const Network& net, const ClassTable& classes, const SimOptions& options)
      : net_(net), classes_(classes), opt_(options), I_(net.node_count), J_(classes.type_count) {
    validate(net, classes);
    if (!(opt_.horizon > 0) || !std::isfinite(opt_.horizon)) throw ParameterError("horizon must be positive and finite");
    warmup_ = opt_.warmup < 0 ? 0.2 * opt_.horizon : opt_.warmup;
    if (!(opt_.horizon > warmup_)) throw ParameterError("horizon must exceed warmup");
    if (opt_.batches < 2) throw ParameterError("at least two batches are required");
    const int C = I_ * J_;
    z_.assign(C, 0);
    qc_.assign(C, 0);
    qn_.assign(net.size(), 0);
    level_.assign(C, 0.0);
    rate_.assign(C, 0.0);
    pending_.resize(C);
    next_arrival_.assign(C, kInf);
    arrival_rng_.reserve(C);
    req_rng_.reserve(C);
    for (int i = 1; i <= I_; ++i) {
      for (int j = 0; j < J_; ++j) {
        arrival_rng_.emplace_back(opt_.seed, stream_key(i, j, StreamPurpose::kArrival));
        req_rng_.emplace_back(opt_.seed, stream_key(i, j, StreamPurpose::kRequirement));
      }
    }
    batch_len_ = (opt_.horizon - warmup_) / opt_.batches;
    acc_z_.assign(opt_.batches, std::vector<double>(C, 0.0));
    acc_q_.assign(opt_.batches, std::vector<double>(C, 0.0));
    m_.horizon = opt_.horizon;
    m_.warmup = warmup_;
    m_.seed = opt_.seed;
    m_.batches = opt_.batches;
    m_.departures = zeros_like(net, J_);
    m_.charged_departures = zeros_like(net, J_);
    m_.blocking_fraction.assign(net.size(), 0.0);
    m_.arrivals_after_warmup.assign(net.size(), 0.0);
    blocked_after_.assign(net.size(), 0.0);
  }

  SimMetrics run() {
    for (int c = 0; c < I_ * J_; ++c) {
      double lam = classes_.lambda[node_of(c)][type_of(c)];
      if (lam > 0) next_arrival_[c] = arrival_rng_[c].exponential(1.0 / lam);
    }
    double t = 0.0;
    while (true) {
      double td = deadlines_.empty() ? kInf : deadlines_.begin()->first;
      double tc = kInf;
      int cc = -1;
      for (int c = 0; c < I_ * J_; ++c) {
        if (z_[c] == 0 || !(rate_[c] > 0)) continue;
        double when = t + std::max(0.0, pending_[c].begin()->first - level_[c]) / rate_[c];
        if (when < tc) {
          tc = when;
          cc = c;
        }
      }
      double ta = kInf;
      int ca = -1;
      for (int c = 0; c < I_ * J_; ++c) {
        if (next_arrival_[c] < ta) {
          ta = next_arrival_[c];
          ca = c;
        }
      }
      double tnext = std::min({td, tc, ta});
      if (tnext >= opt_.horizon) {
        advance(t, opt_.horizon);
        log(opt_.horizon, EventKind::kHorizon, 0, 0);
        break;
      }
      advance(t, tnext);
      t = tnext;
      ++m_.counts.events;
      bool changed;
      if (td <= tc && td <= ta) {
        changed = on_deadline(t);
      } else if (tc <= ta) {
        changed = on_completion(t, cc);
      } else {
        changed = on_arrival(t, ca);
      }
      if (changed) reallocate(t);
    }
    finish();
    return std::move(m_);
  }

 private:
  int node_of(int c) const { return c / J_ + 1; }
  int type_of(int c) const { return c % J_; }
  int cls(int i, int j) const { return (i - 1) * J_ + j; }

  void log(double t, EventKind kind, int node, int type) {
    if (opt_.event_log) m_.log.push_back({t, kind, node, type});
  }

  void advance(double from, double to) {
    double dt = to - from;
    if (!(dt > 0)) return;
    for (int c = 0; c < I_ * J_; ++c) {
      if (z_[c] > 0) level_[c] += rate_[c] * dt;
    }
    double a = std::max(from, warmup_);
    while (a < to) {
      int b = std::min(opt_.batches - 1, static_cast<int>((a - warmup_) / batch_len_));
      double end = std::min(to, warmup_ + (b + 1) * batch_len_);
      if (b == opt_.batches - 1) end = to;
      double len = end - a;
      if (len > 0) {
        for (int c = 0; c < I_ * J_; ++c) {
          acc_z_[b][c] += z_[c] * len;
          acc_q_[b][c] += qc_[c] * len;
        }
        if (opt_.record_states) {
          m_.states[z_] += len;
          if (static_cast<long>(m_.states.size()) > opt_.state_limit) {
            throw RangeError("state distribution exceeds " + std::to_string(opt_.state_limit) +
                             " distinct states; widen the truncation");
          }
        }
      }
      if (end <= a) break;
      a = end;
    }
  }

  void depart(long id, const Ev& ev, double t) {
    if (ev.charged) {
      ++m_.counts.departed_charged;
    }
    int c = cls(ev.node, ev.type);
    --qc_[c];
    --qn_[ev.node];
    if (ev.arrival >= warmup_) {
      m_.departures[ev.node][ev.type] += 1.0;
      if (ev.charged) m_.charged_departures[ev.node][ev.type] += 1.0;
    }
    log(t, ev.charged ? EventKind::kDeparture : EventKind::kExpired, ev.node, ev.type);
    evs_.erase(id);
  }

  bool on_deadline(double t) {
    auto it = deadlines_.begin();
    long id = it->second;
    deadlines_.erase(it);
    Ev ev = evs_.at(id);
    bool changed = false;
    if (!ev.charged) {
      int c = cls(ev.node, ev.type);
      pending_[c].erase({ev.level, id});
      --z_[c];
      ++m_.counts.expired_uncharged;
      changed = true;
    }
    depart(id, ev, t);
    return changed;
  }

  bool on_completion(double t, int c) {
    auto it = pending_[c].begin();
    long id = it->second;
    pending_[c].erase(it);
    --z_[c];
    ++m_.counts.completed;
    Ev& ev = evs_.at(id);
    ev.charged = true;
    log(t, EventKind::kCompletion, ev.node, ev.type);
    if (opt_.ignore_deadlines) depart(id, Ev(ev), t);
    return true;
  }

  bool on_arrival(double t, int c) {
    int i = node_of(c), j = type_of(c);
    next_arrival_[c] = t + arrival_rng_[c].exponential(1.0 / classes_.lambda[i][j]);
    ++m_.counts.generated;
    if (t >= warmup_) m_.arrivals_after_warmup[i] += 1.0;
    if (qn_[i] >= net_.k_spaces[i]) {
      ++m_.counts.blocked;
      if (t >= warmup_) blocked_after_[i] += 1.0;
      log(t, EventKind::kBlocked, i, j);
      return false;
    }
    auto [b, d] = sample_bd(classes_.joint[j], req_rng_[c]);
    ++m_.counts.admitted;
    long id = next_id_++;
    Ev ev{i, j, level_[c] + b, opt_.ignore_deadlines ? kInf : t + d, t, false};
    ++qc_[c];
    ++qn_[i];
    if (std::isfinite(net_.k_spaces[i])) m_.max_q_ratio = std::max(m_.max_q_ratio, qn_[i] / net_.k_spaces[i]);
    log(t, EventKind::kArrival, i, j);
    evs_.emplace(id, ev);
    if (std::isfinite(ev.deadline)) deadlines_.insert({ev.deadline, id});
    if (!(b > 0)) {
      ++m_.counts.completed;
      evs_.at(id).charged = true;
      log(t, EventKind::kCompletion, i, j);
      if (opt_.ignore_deadlines) depart(id, Ev(evs_.at(id)), t);
      return false;
    }
    pending_[c].insert({ev.level, id});
    ++z_[c];
    long total = 0;
    for (int v : z_) total += v;
    m_.max_total_z = std::max(m_.max_total_z, total);
    return true;
  }

  void reallocate(double t) {
    auto hit = cache_.find(z_);
    if (hit != cache_.end()) {
      rate_ = hit->second;
      return;
    }
    std::vector<double> rates(I_ * J_, 0.0);
    bool any = std::any_of(z_.begin(), z_.end(), [](int v) { return v > 0; });
    if (any) {
      StateZ state{zeros_like(net_, J_), zeros_like(net_, J_)};
      for (int c = 0; c < I_ * J_; ++c) {
        state.z[node_of(c)][type_of(c)] = z_[c];
        state.q[node_of(c)][type_of(c)] = qc_[c];
      }
      Allocation alloc;
      try {
        alloc = allocate(opt_.model, net_, classes_, state, opt_.allocator);
      } catch (const Error&) {
        rethrow_at(t);
      }
      ++m_.counts.allocations;
      for (int c = 0; c < I_ * J_; ++c) {
        if (z_[c] > 0) rates[c] = alloc.p[node_of(c)][type_of(c)];
      }
    }
    cache_.emplace(z_, rates);
    rate_ = std::move(rates);
  }

  void finish() {
    for (const auto& [id, ev] : evs_) {
      if (ev.charged) {
        ++m_.counts.present_charged;
      } else {
        ++m_.counts.present_uncharged;
      }
    }
    const int B = opt_.batches;
    double tq = boost::math::quantile(boost::math::complement(boost::math::students_t(B - 1), 0.025));
    m_.mean_z = zeros_like(net_, J_);
    m_.mean_q = zeros_like(net_, J_);
    m_.se_z = zeros_like(net_, J_);
    m_.se_q = zeros_like(net_, J_);
    m_.ci_z = zeros_like(net_, J_);
    m_.ci_q = zeros_like(net_, J_);
    auto stats = [&](const std::vector<std::vector<double>>& acc, int c, double& mean, double& se) {
      double s = 0.0, s2 = 0.0;
      for (int b = 0; b < B; ++b) {
        double v = acc[b][c] / batch_len_;
        s += v;
        s2 += v * v;
      }
      mean = s / B;
      double var = std::max(0.0, (s2 - B * mean * mean) / (B - 1));
      se = std::sqrt(var / B);
    };
    for (int c = 0; c < I_ * J_; ++c) {
      int i = node_of(c), j = type_of(c);
      stats(acc_z_, c, m_.mean_z[i][j], m_.se_z[i][j]);
      stats(acc_q_, c, m_.mean_q[i][j], m_.se_q[i][j]);
      m_.ci_z[i][j] = tq * m_.se_z[i][j];
      m_.ci_q[i][j] = tq * m_.se_q[i][j];
    }
    for (int i = 1; i <= I_; ++i) {
      double n = m_.arrivals_after_warmup[i];
      m_.blocking_fraction[i] = n > 0 ? blocked_after_[i] / n : 0.0;
    }
    if (opt_.record_states) {
      double span = opt_.horizon - warmup_;
      for (auto& [key, w] : m_.states) w /= span;
    }
  }

  const Network& net_;
  const ClassTable& classes_;
  SimOptions opt_;
  int I_;
  int J_;
  double warmup_ = 0.0;
  double batch_len_ = 0.0;
  std::vector<int> z_;   // uncharged per class
  std::vector<int> qc_;  // present per class
  std::vector<int> qn_;  // present per node
  std::vector<double> level_;
  std::vector<double> rate_;
  std::vector<std::set<std::pair<double, long>>> pending_;
  std::set<std::pair<double, long>> deadlines_;
  std::unordered_map<long, Ev> evs_;
  long next_id_ = 0;
  std::vector<double> next_arrival_;
  std::vector<Philox> arrival_rng_;
  std::vector<Philox> req_rng_;
  std::map<std::vector<int>, std::vector<double>> cache_;
  std::vector<std::vector<double>> acc_z_;
  std::vector<std::vector<double>> acc_q_;
  std::vector<double> blocked_after_;
  SimMetrics m_;
};

}  // namespace

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kArrival:
      return "arrival";
    case EventKind::kBlocked:
      return "blocked";
    case EventKind::kCompletion:
      return "completion";
    case EventKind::kDeparture:
      return "departure";
    case EventKind::kExpired:
      return "expired";
    case EventKind::kHorizon:
      return "horizon";
  }
  return "?";
}

SimMetrics simulate(const Network& net, const ClassTable& classes, const SimOptions& options) {
  return Simulation(net, classes, options).run();
}

std::vector<SimMetrics> simulate_replications(const Network& net, const ClassTable& classes,
                                              const SimOptions& options, int replications, int jobs) {
  if (replications < 1) throw ParameterError("replications must be positive");
  std::vector<SimMetrics> out(replications);
  std::vector<std::exception_ptr> errors(replications);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < replications; r = next++) {
      SimOptions o = options;
      o.seed = options.seed + static_cast<std::uint64_t>(r);
      try {
        out[r] = simulate(net, classes, o);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  int n = std::max(1, std::min(jobs, replications));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

SuccessEstimate success_fraction_estimate(const SimMetrics& m) {
  SuccessEstimate s{m.mean_z, m.mean_z};
  for (size_t i = 1; i < m.mean_z.size(); ++i) {
    for (size_t j = 0; j < m.mean_z[i].size(); ++j) {
      double q = m.mean_q[i][j];
      s.from_means[i][j] = q > 0 ? 1.0 - m.mean_z[i][j] / q : kNaN;
      double n = m.departures[i][j];
      s.from_counts[i][j] = n > 0 ? m.charged_departures[i][j] / n : kNaN;
    }
  }
  return s;
}

double aggregate_success_from_means(const SimMetrics& m) {
  double z = 0.0, q = 0.0;
  for (size_t i = 1; i < m.mean_z.size(); ++i) {
    for (size_t j = 0; j < m.mean_z[i].size(); ++j) {
      z += m.mean_z[i][j];
      q += m.mean_q[i][j];
    }
  }
  return q > 0 ? 1.0 - z / q : kNaN;
}

double aggregate_success_from_counts(const SimMetrics& m) {
  double n = 0.0, s = 0.0;
  for (size_t i = 1; i < m.departures.size(); ++i) {
    for (size_t j = 0; j < m.departures[i].size(); ++j) {
      n += m.departures[i][j];
      s += m.charged_departures[i][j];
    }
  }
  return n > 0 ? s / n : kNaN;
}

StateDistribution state_distribution(const SimMetrics& metrics) {
  if (metrics.states.empty()) throw PreconditionError("state distribution was not recorded");
  return metrics.states;
}

double total_variation(const StateDistribution& a, const StateDistribution& b) {
  double tv = 0.0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    tv += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) tv += std::abs(v);
  }
  return 0.5 * tv;
}

}  // namespace evgrid
