// gaitlab: simulate, predict, sweep and bench drivers for the kneed biped.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gaitlab/commands.hpp"
#include "gaitlab/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitScenario = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int steps = -1;
  std::string model;
  int workers = 0;
  bool strict = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_workers) {
  cmd->add_option("--config", o.config_path, "scenario config (JSON)")->required();
  cmd->add_option("--out", o.out_dir, "output directory")->envname("GAITLAB_OUT");
  cmd->add_option("--steps", o.steps, "override run.steps");
  cmd->add_option("--model", o.model, "override run.model (nonlinear|clred|both)");
  if (with_workers) cmd->add_option("--workers", o.workers, "sweep worker threads");
  cmd->add_flag("--strict", o.strict, "exit 3 if the scenario fails");
}

gaitlab::ScenarioConfig load(const CommonOpts& o) {
  gaitlab::ScenarioConfig cfg = gaitlab::load_scenario(o.config_path);
  if (o.steps >= 0) cfg.run.steps = o.steps;
  if (!o.model.empty()) cfg.run.model = gaitlab::model_from_string(o.model);
  return cfg;
}

std::string resolve_out_dir(const CommonOpts& o, const gaitlab::ScenarioConfig& cfg) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (!cfg.run.out_dir.empty()) return cfg.run.out_dir;
  return "out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kneed biped gait lab: nonlinear simulation and closed-form walkability"};
  app.require_subcommand(1);

  CommonOpts opts;
  CLI::App* simulate = app.add_subcommand("simulate", "integrate the nonlinear gait, emit trace and descriptor CSVs");
  CLI::App* predict = app.add_subcommand("predict", "closed-form walkability verdict and descriptors");
  CLI::App* sweep = app.add_subcommand("sweep", "steady descriptors over a beta grid per kappa");
  CLI::App* bench = app.add_subcommand("bench", "time the integrated vs closed-form pipelines");
  add_common(simulate, opts, false);
  add_common(predict, opts, false);
  add_common(sweep, opts, true);
  add_common(bench, opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const gaitlab::ScenarioConfig cfg = load(opts);
    const std::string out_dir = resolve_out_dir(opts, cfg);
    gaitlab::CommandResult res;
    if (simulate->parsed()) res = gaitlab::cmd_simulate(cfg, out_dir);
    else if (predict->parsed()) res = gaitlab::cmd_predict(cfg, out_dir);
    else if (sweep->parsed()) res = gaitlab::cmd_sweep(cfg, out_dir, opts.workers);
    else res = gaitlab::cmd_bench(cfg, out_dir);

    std::cout << res.summary.dump(2) << "\n";
    if (!res.scenario_ok && opts.strict) return kExitScenario;
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
