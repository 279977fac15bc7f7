// Command line front end: validates a declarative config, runs the
// requested experiment, and writes a deterministic artifact bundle plus a
// manifest.  Exit codes: 0 success, 1 selftest failure, 2 configuration
// or usage error, 3 runtime failure.  Errors are emitted to stderr as a
// single JSON diagnostic line.

#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "partitia/experiment.hpp"

namespace {

int fail(int code, const char* kind, const std::string& message) {
  const nlohmann::json diag{{"error", kind}, {"message", message}};
  std::cerr << diag.dump() << "\n";
  return code;
}

struct RunOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  std::int64_t threads = -1;
};

void add_run_options(CLI::App* cmd, RunOpts& opt) {
  cmd->add_option("-c,--config", opt.config_path, "configuration file path")
      ->required();
  cmd->add_option("-s,--seed", opt.seed, "override experiment.seed");
  cmd->add_option("-o,--out", opt.out_dir, "output directory");
  cmd->add_option("-t,--threads", opt.threads,
                  "override experiment.threads (0 = all cores)");
}

int run_family(const char* family, const RunOpts& opt,
               std::initializer_list<partitia::ExperimentKind> kinds) {
  partitia::ExperimentConfig cfg;
  try {
    const partitia::ConfigMap map =
        partitia::ConfigMap::load_file(opt.config_path);
    cfg = partitia::ExperimentConfig::from_map(map);
    bool member = false;
    for (const partitia::ExperimentKind k : kinds)
      member = member || cfg.kind == k;
    if (!member)
      throw partitia::SchemaError(
          std::string("experiment.kind '") + partitia::kind_name(cfg.kind) +
          "' does not belong to the '" + family + "' subcommand");
    if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
    if (opt.threads >= 0) cfg.threads = static_cast<int>(opt.threads);
  } catch (const partitia::SchemaError& e) {
    return fail(2, "schema", e.what());
  } catch (const std::exception& e) {
    return fail(3, "runtime", e.what());
  }

  std::string out = opt.out_dir;
  if (out.empty()) out = cfg.out_dir;
  if (out.empty()) {
    const char* env = std::getenv("PARTITIA_OUT");
    if (env != nullptr) out = env;
  }
  if (out.empty()) out = ".";

  try {
    const nlohmann::json manifest = partitia::run_experiment(cfg, out);
    std::cout << "wrote " << manifest.at("outputs").size() + 1
              << " files to " << out << " (prefix " << cfg.prefix
              << ", config " << cfg.source_hash << ")\n";
    return 0;
  } catch (const std::exception& e) {
    return fail(3, "runtime", e.what());
  }
}

int run_preset(const std::string& name, const std::string& out_dir,
               bool list) {
  if (list) {
    for (const std::string& p : partitia::preset_names())
      std::cout << p << "\n";
    return 0;
  }
  if (name.empty())
    return fail(2, "schema", "preset needs a name or --list");
  std::string text;
  try {
    text = partitia::preset_text(name);
  } catch (const std::exception& e) {
    return fail(2, "schema", e.what());
  }
  if (out_dir.empty()) {
    std::cout << text;
    return 0;
  }
  try {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / (name + ".cfg");
    partitia::write_text_file(path.string(), text);
    std::cout << "wrote " << path.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return fail(3, "runtime", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial random partition toolkit"};
  app.set_version_flag("--version", std::string(partitia::kVersion));
  app.require_subcommand(1);

  RunOpts sample_opt, dynamics_opt, analyze_opt;
  CLI::App* sample = app.add_subcommand(
      "sample", "exact draws: ensembles, sweeps, fluctuation tests");
  add_run_options(sample, sample_opt);
  CLI::App* dynamics = app.add_subcommand(
      "dynamics", "Markov chains: trajectories and stationarity checks");
  add_run_options(dynamics, dynamics_opt);
  CLI::App* analyze = app.add_subcommand(
      "analyze", "series analysis: rate-function and droplet reports");
  add_run_options(analyze, analyze_opt);

  std::string preset_name, preset_out;
  bool preset_list = false;
  CLI::App* preset =
      app.add_subcommand("preset", "write a ready-to-run configuration");
  preset->add_option("name", preset_name, "preset name");
  preset->add_option("-o,--out", preset_out,
                     "directory to write <name>.cfg into (default: stdout)");
  preset->add_flag("--list", preset_list, "list available presets");

  CLI::App* selftest = app.add_subcommand(
      "selftest", "run the enumeration-scale invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  if (sample->parsed())
    return run_family("sample", sample_opt,
                      {partitia::ExperimentKind::kSample,
                       partitia::ExperimentKind::kCondensationSweep,
                       partitia::ExperimentKind::kFluctuationTest});
  if (dynamics->parsed())
    return run_family("dynamics", dynamics_opt,
                      {partitia::ExperimentKind::kDynamics,
                       partitia::ExperimentKind::kStationarity});
  if (analyze->parsed())
    return run_family("analyze", analyze_opt,
                      {partitia::ExperimentKind::kCramer,
                       partitia::ExperimentKind::kDropletShift});
  if (preset->parsed())
    return run_preset(preset_name, preset_out, preset_list);
  if (selftest->parsed())
    return partitia::selftest(std::cout) ? 0 : 1;
  return fail(2, "usage", "a subcommand is required");
}
