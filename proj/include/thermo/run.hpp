#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "thermo/audit.hpp"
#include "thermo/config.hpp"

namespace thermo {

struct RunOptions {
  std::string out_dir;  // empty: no files
  int steps = -1;       // overrides the config when positive
  double tau = -1.0;    // overrides the config when positive
};

/// One energy.csv row; step 0 holds the initial energies with empty channels.
struct LedgerRow {
  int step = 0;
  double time = 0.0;
  double tau = 0.0;
  EnergyTotals energy;
  StepChannels channels;
  double mech_slack = 0.0;
  double mech_tol = 0.0;
  double total_drift = 0.0;
  double closure = 0.0;
  int outer_iterations = 0;
  double max_residual = 0.0;
  double min_alpha = 0.0, max_alpha = 0.0;
  double min_chi = 0.0, max_chi = 0.0;
  double min_theta = 0.0;
};

struct RunResult {
  std::vector<LedgerRow> rows;
  bool completed = false;
  std::string error;
  double outer_tol = 0.0;

  bool mech_pass = true;
  double worst_slack_ratio = 0.0;  // min over steps of slack / tol, negative when violated
  bool closure_pass = true;
  double max_closure = 0.0;  // relative to total energy
  bool conserving_checked = false;
  bool conserving_pass = true;
  double max_relative_drift = 0.0;

  bool bounds_pass = true;
  int alpha_clamped = 0;
  int theta_clamped = 0;
  bool enthalpy_warning = false;
  BlockResiduals final_residuals;

  nlohmann::json diagnostics = nlohmann::json::object();
  State final_state;

  bool audit_pass() const { return completed && mech_pass && closure_pass && conserving_pass && bounds_pass; }
};

/// Frozen energy.csv header, without a trailing newline.
const std::string& energy_csv_header();
std::string energy_csv_row(const LedgerRow& r);

/// Runs the configured scenario; writes energy.csv, fields_NNNN.vtk and report.json when out_dir is set.
RunResult run(const RunConfig& cfg, const RunOptions& opt = {});

nlohmann::json report_json(const RunConfig& cfg, const RunResult& r);

/// Front position where the phase fraction crosses 1/2, by linear interpolation from the x_lo side.
double phase_front(const ScalarField& chi, const Grid& g);

}  // namespace thermo
