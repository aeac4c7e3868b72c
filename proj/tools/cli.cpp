#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "thermo/run.hpp"

namespace {

// Exit codes: 0 ok, 1 usage or config error, 2 strict audit failure, 3 solver failure.
int do_run(const std::string& path, int steps, double tau, const std::string& out, bool strict) {
  thermo::RunConfig cfg = thermo::load_config(path);
  if (strict) cfg.strict_audit = true;
  thermo::RunOptions opt;
  opt.out_dir = out;
  opt.steps = steps;
  opt.tau = tau;
  const thermo::RunResult r = thermo::run(cfg, opt);
  const auto& last = r.rows.back();
  std::printf("%s: %d steps, t = %.6g, audit %s (worst slack/tol %.3g, max drift %.3g), bounds %s\n",
              cfg.name.c_str(), last.step, last.time, r.audit_pass() ? "pass" : "FAIL", r.worst_slack_ratio,
              r.max_relative_drift, r.bounds_pass ? "pass" : "FAIL");
  if (!r.completed) {
    std::fprintf(stderr, "error: %s\n", r.error.c_str());
    return 3;
  }
  if (cfg.strict_audit && !r.audit_pass()) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermo-visco-elastic damage and phase-transition solver"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  int steps = -1;
  double tau = -1.0;
  bool strict = false;
  auto* run = app.add_subcommand("run", "Run a config and write energy.csv, VTK fields and report.json");
  run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--steps", steps, "Override the step count")->check(CLI::PositiveNumber);
  run->add_option("--tau", tau, "Override the time step")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_flag("--strict-audit", strict, "Exit nonzero when an audit fails");

  auto* list = app.add_subcommand("scenarios", "List shipped presets, or print one");
  std::string show;
  list->add_option("name", show, "Preset to print");

  std::string check_path;
  auto* check = app.add_subcommand("check-config", "Parse and validate a config");
  check->add_option("path", check_path, "Config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return do_run(config_path, steps, tau, out_dir, strict);
    if (*list) {
      if (!show.empty()) {
        std::cout << thermo::scenario_text(show);
      } else {
        for (const auto& n : thermo::list_scenarios()) std::cout << n << "\n";
      }
      return 0;
    }
    if (*check) {
      const thermo::RunConfig cfg = thermo::load_config(check_path);
      std::printf("%s: ok (%s, %d steps, tau %g)\n", check_path.c_str(), cfg.name.c_str(), cfg.steps, cfg.tau);
      return 0;
    }
  } catch (const thermo::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
