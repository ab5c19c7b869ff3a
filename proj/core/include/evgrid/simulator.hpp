#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evgrid/allocator.hpp"

namespace evgrid {

struct EvRecord {
  int node = 0;
  int type = 0;
  double residual_b = 0.0;
  double deadline_abs = 0.0;
  double arrival_time = 0.0;
};

// kDeparture: a charged EV leaves. kExpired: an uncharged EV reaches its deadline.
enum class EventKind { kArrival, kBlocked, kCompletion, kDeparture, kExpired, kHorizon };

struct EventLogEntry {
  double t = 0.0;
  EventKind kind = EventKind::kArrival;
  int node = 0;
  int type = 0;
};

std::string to_string(EventKind kind);

struct SimOptions {
  LoadModel model = LoadModel::kDistflow;
  double horizon = 100.0;
  double warmup = -1.0;  // < 0: 20% of the horizon
  std::uint64_t seed = 1;
  int batches = 20;
  // EVs leave as soon as they are charged and never time out.
  bool ignore_deadlines = false;
  bool record_states = false;
  long state_limit = 1'000'000;  // distinct Z vectors kept before failing
  bool event_log = false;
  AllocatorOptions allocator;
};

// Flattened Z vector: index (i - 1) * J + j.
using StateKey = std::vector<int>;
using StateDistribution = std::map<StateKey, double>;

struct EventCounts {
  long generated = 0;
  long blocked = 0;
  long admitted = 0;
  long completed = 0;           // reached full charge
  long expired_uncharged = 0;   // deadline before full charge
  long departed_charged = 0;    // deadline after full charge (or at completion)
  long present_uncharged = 0;   // at the horizon
  long present_charged = 0;     // at the horizon
  long allocations = 0;         // allocator solves (cache misses)
  long events = 0;
};

struct SimMetrics {
  double horizon = 0.0;
  double warmup = 0.0;
  std::uint64_t seed = 0;
  int batches = 0;
  NodeTypeMatrix mean_z;
  NodeTypeMatrix mean_q;
  NodeTypeMatrix se_z;  // batch-means standard error
  NodeTypeMatrix se_q;
  NodeTypeMatrix ci_z;  // 95% half-width, Student t with batches - 1 dof
  NodeTypeMatrix ci_q;
  // Per class, counted over EVs admitted after warmup that left before the horizon.
  NodeTypeMatrix departures;
  NodeTypeMatrix charged_departures;
  std::vector<double> blocking_fraction;  // per node, arrivals after warmup
  std::vector<double> arrivals_after_warmup;
  double max_q_ratio = 0.0;  // max over nodes and time of Q_i / K_i (finite K)
  long max_total_z = 0;
  EventCounts counts;
  StateDistribution states;  // time-weighted, after warmup
  std::vector<EventLogEntry> log;
};

SimMetrics simulate(const Network& net, const ClassTable& classes, const SimOptions& options);

// Independent replications with seeds seed, seed + 1, ...; run on up to `jobs` threads.
std::vector<SimMetrics> simulate_replications(const Network& net, const ClassTable& classes,
                                              const SimOptions& options, int replications, int jobs);

struct SuccessEstimate {
  NodeTypeMatrix from_means;   // 1 - E[Z] / E[Q]; NaN when E[Q] = 0
  NodeTypeMatrix from_counts;  // charged departures / departures; NaN when none
};

SuccessEstimate success_fraction_estimate(const SimMetrics& metrics);

// Aggregate fraction over all classes by either estimator (NaN when undefined).
double aggregate_success_from_means(const SimMetrics& metrics);
double aggregate_success_from_counts(const SimMetrics& metrics);

StateDistribution state_distribution(const SimMetrics& metrics);

// Sum of |a - b| / 2 over the union of supports.
double total_variation(const StateDistribution& a, const StateDistribution& b);

}  // namespace evgrid
