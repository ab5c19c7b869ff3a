#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include "evgrid_app/app.hpp"

namespace fs = std::filesystem;
using evgrid::app::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Invocation {
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  evgrid::app::CommandOptions options;
};

json versions() {
  return {{"evgrid", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION},
          {"compiler", __VERSION__}};
}

void write_file(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw evgrid::app::ConfigError("--out", "cannot write " + p.string());
  out << data;
}

// Effective configuration: preset (scenario) patched by the config file,
// then the command-line overrides.
json resolve_config(const Invocation& inv, std::string& base_dir) {
  json doc = json::object();
  if (inv.command == "scenario") doc = evgrid::app::scenario_config(inv.options.scenario);
  if (!inv.config_path.empty()) {
    json user = evgrid::app::read_json_file(inv.config_path);
    if (!user.is_object()) throw evgrid::app::ConfigError("$", "expected an object");
    if (inv.command == "scenario") {
      doc.merge_patch(user);
    } else {
      doc = user;
    }
    base_dir = fs::absolute(inv.config_path).parent_path().string();
  } else if (inv.command != "scenario") {
    throw evgrid::app::ConfigError("--config", "required for " + inv.command);
  }
  if (inv.seed) doc["run"]["seed"] = *inv.seed;
  if (inv.model) doc["model"] = *inv.model;
  return doc;
}

// Runs one command and writes CSVs plus manifest.json; returns the manifest.
json execute(const Invocation& inv, const json& doc, const std::string& base_dir, const std::vector<std::string>& argv) {
  evgrid::app::Experiment ex = evgrid::app::load_experiment(doc, base_dir);
  evgrid::app::CommandOutput out = evgrid::app::run_command(inv.command, ex, inv.options);
  fs::create_directories(inv.out_dir);
  json files = json::array();
  for (const auto& a : out.files) {
    std::string data = a.table.str();
    write_file(fs::path(inv.out_dir) / a.name, data);
    files.push_back({{"file", a.name}, {"sha256", evgrid::app::sha256_hex(data)}});
  }
  json manifest = {{"tool", "evgrid"},
                   {"command", inv.command},
                   {"scenario", inv.options.scenario},
                   {"ratio", inv.options.ratio},
                   {"argv", argv},
                   {"base_dir", base_dir},
                   {"config", doc},
                   {"config_sha256", evgrid::app::sha256_hex(doc.dump())},
                   {"seed", ex.run.seed},
                   {"model", evgrid::to_string(ex.model)},
                   {"jobs", inv.options.jobs},
                   {"versions", versions()},
                   {"outputs", files}};
  write_file(fs::path(inv.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  for (const auto& n : out.notes) std::cerr << n << "\n";
  return manifest;
}

int replay(const std::string& manifest_path, const std::string& out_dir, int jobs,
           const std::vector<std::string>& argv) {
  json m = evgrid::app::read_json_file(manifest_path);
  for (const char* key : {"command", "config", "outputs", "base_dir"}) {
    if (!m.contains(key)) throw evgrid::app::ConfigError(std::string("$.") + key, "missing in manifest");
  }
  Invocation inv;
  inv.command = m["command"].get<std::string>();
  inv.options.scenario = m.value("scenario", "");
  inv.options.ratio = m.value("ratio", "pareto");
  inv.options.jobs = jobs;
  inv.out_dir = out_dir.empty() ? (fs::path(manifest_path).parent_path() / "replay").string() : out_dir;
  json again = execute(inv, m["config"], m["base_dir"].get<std::string>(), argv);
  int mismatches = 0;
  for (const auto& f : m["outputs"]) {
    std::string name = f["file"].get<std::string>();
    bool same = false;
    for (const auto& g : again["outputs"]) {
      if (g["file"] == f["file"]) same = g["sha256"] == f["sha256"];
    }
    std::cout << name << "," << (same ? "identical" : "different") << "\n";
    if (!same) ++mismatches;
  }
  return mismatches == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"EV charging on radial distribution grids: simulation, fluid limits, load flow, weight design"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Invocation inv;
  std::string seed_text;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "JSON experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", inv.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed_text, "override run.seed (u64)");
    sub->add_option("--jobs", inv.options.jobs, "worker threads for replications")->check(CLI::PositiveNumber);
    sub->add_option("--model", [&](const CLI::results_t& r) {
      inv.model = r[0];
      return true;
    }, "distflow|ac|closed-form")->check(CLI::IsMember({"distflow", "ac", "closed-form"}));
  };
  const std::map<std::string, std::string> about{
      {"simulate", "discrete-event simulation of the charging network"},
      {"fluid-transient", "fluid trajectory from run.state over run.fluid_horizon"},
      {"fluid-invariant", "fluid invariant point z*"},
      {"allocate", "optimal charging rates at run.state"},
      {"loadflow-check", "linearized vs AC squared voltages for given loads"},
      {"product-form", "simulated state law vs the product-form distribution"},
      {"optimize-weights", "utility weights maximizing fluid success on an overloaded line"},
      {"compare", "simulated mean uncharged population vs fluid z*"}};
  for (const auto& name : evgrid::app::command_names()) {
    CLI::App* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : "");
    add_common(sub);
    if (name == "optimize-weights") {
      sub->add_option("--ratio", inv.options.ratio, "ratio law: det|pareto|bound")
          ->check(CLI::IsMember({"det", "pareto", "bound"}))
          ->capture_default_str();
    }
    sub->callback([&inv, name] { inv.command = name; });
  }
  CLI::App* scen = app.add_subcommand("scenario", "named presets; --config patches the preset");
  scen->add_option("name", inv.options.scenario, "preset name")
      ->required()
      ->check(CLI::IsMember(evgrid::app::scenario_names()));
  add_common(scen);
  scen->callback([&inv] { inv.command = "scenario"; });

  std::string manifest_path, replay_out;
  int replay_jobs = 1;
  CLI::App* rep = app.add_subcommand("replay", "rerun a manifest and compare output hashes");
  rep->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", replay_out, "output directory (default: <manifest dir>/replay)");
  rep->add_option("--jobs", replay_jobs, "worker threads")->check(CLI::PositiveNumber);
  rep->callback([&inv] { inv.command = "replay"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (inv.command == "replay") return replay(manifest_path, replay_out, replay_jobs, args);
    if (!seed_text.empty()) {
      size_t used = 0;
      unsigned long long s = 0;
      try {
        s = std::stoull(seed_text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != seed_text.size() || seed_text[0] == '-') throw evgrid::app::ConfigError("--seed", "expected a u64");
      inv.seed = s;
    }
    std::string base_dir = fs::current_path().string();
    json doc = resolve_config(inv, base_dir);
    execute(inv, doc, base_dir, args);
    return 0;
  } catch (const evgrid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_input() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
