#pragma once

#include <string>
#include <vector>

#include "evgrid_app/config.hpp"

namespace evgrid::app {

// Floats with 9 significant digits; "inf", "-inf", "nan" otherwise.
std::string fmt(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string str() const;
};

struct Artifact {
  std::string name;  // file name inside the output directory
  CsvTable table;
};

struct CommandOptions {
  int jobs = 1;
  std::string scenario;           // scenario subcommand
  std::string ratio = "pareto";   // optimize-weights: det | pareto | bound
};

struct CommandOutput {
  std::vector<Artifact> files;
  std::vector<std::string> notes;  // one-line human summary, printed to stderr
};

const std::vector<std::string>& command_names();
const std::vector<std::string>& scenario_names();

// Preset configuration document for a named scenario.
json scenario_config(const std::string& name);

CommandOutput run_command(const std::string& command, const Experiment& ex, const CommandOptions& options);

struct CompareRow {
  int node = 0;
  double sim_mean_z = 0.0;  // summed over types, averaged over replications
  double sim_ci = 0.0;      // 95% half-width
  double fluid_z_star = 0.0;
  double rel_err = 0.0;  // |z* - sim| / sim
};

// Simulation and invariant point on the same configuration.
std::vector<CompareRow> compare_rows(const Experiment& ex, int jobs);

struct SweepPoint {
  double lambda = 0.0;    // total arrival rate, split evenly over nodes
  double dep_rate = 0.0;  // 1 / E[D]
  double agg_success = 0.0;
  double ci = 0.0;        // 95% half-width over replications (0 for one replication)
  double bound = 0.0;     // P(D > B) at full rate c_max = 1
  long departures = 0;
};

// Grid over run.lambdas x run.dep_rates with independent exponential B and D
// (E[B] from the first type). Every point reuses run.seed.
std::vector<SweepPoint> markov_sweep(const Experiment& ex, int jobs);

std::string sha256_hex(const std::string& data);

}  // namespace evgrid::app
