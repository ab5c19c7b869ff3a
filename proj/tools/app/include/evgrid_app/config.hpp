#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evgrid/allocator.hpp"
#include "evgrid/errors.hpp"
#include "evgrid/grid.hpp"
#include "evgrid/stochastics.hpp"

namespace evgrid::app {

using nlohmann::json;

// Invalid configuration; the message starts with the JSON path of the field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what) : Error(path + ": " + what, true), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct RunSettings {
  double horizon = 1000.0;
  double warmup = -1.0;  // < 0: 20% of the horizon
  std::uint64_t seed = 1;
  int replications = 1;
  int batches = 20;
  double dt = 0.0;               // fluid grid step; 0: E[D] / 200
  double fluid_horizon = 10.0;   // fluid-transient end time
  GammaConvention gamma = GammaConvention::kErlang;
  NodeTypeMatrix state;          // allocate / fluid-transient initial state; empty: zeros
  std::vector<double> power;     // loadflow-check injections per node (size I); empty: allocation at `state`
  std::vector<double> lambdas;   // case-markov-sweep grid (total arrival rate)
  std::vector<double> dep_rates; // case-markov-sweep grid (1 / E[D])
  double ratio_mean = 1.0;       // optimize-weights: E[H]
  double pareto_shape = 2.0;     // optimize-weights: Pareto a
};

struct Experiment {
  json doc;  // resolved configuration, as recorded in the manifest
  Network net;
  ClassTable classes;
  LoadModel model = LoadModel::kDistflow;
  RunSettings run;
};

json read_json_file(const std::string& path);

// Validates the whole document before building anything. Relative network
// file paths resolve against `base_dir`.
Experiment load_experiment(const json& doc, const std::string& base_dir = ".");

// JSON number, or null / "inf" for +infinity.
json number_or_inf(double v);

}  // namespace evgrid::app
