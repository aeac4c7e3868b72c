#pragma once

#include <string>
#include <vector>

#include "thermo/stepper.hpp"

namespace thermo {

/// Integrated energies of one state.
struct EnergyTotals {
  double kinetic = 0.0;
  double stored = 0.0;
  double damage_gradient = 0.0;
  double enthalpy = 0.0;
  double mechanical() const { return kinetic + stored + damage_gradient; }
  double total() const { return mechanical() + enthalpy; }
};

EnergyTotals energy_totals(const State& s, const Problem& p);

/// Energies before and after a step plus the step's channels.
struct EnergyLedger {
  EnergyTotals prev;
  EnergyTotals next;
  StepChannels channels;
  double tau = 0.0;
};

EnergyLedger make_ledger(const State& prev, const State& next, const StepReport& rep, const Problem& p);

struct MechCheck {
  double slack = 0.0;  // RHS - LHS of the discrete mechanical energy inequality
  double lhs = 0.0;
  double rhs = 0.0;
  double scale = 0.0;
  double tol = 0.0;
  bool pass = true;
  std::string breakdown;  // per-channel listing, filled on failure
};

/// tol = 10 * outer_tol * scale, with scale the larger of the total energy and the step's channels.
MechCheck mech_energy_check(const EnergyLedger& l, double outer_tol);

struct TotalCheck {
  double drift = 0.0;     // change of total energy minus work and heat inputs
  double expected = 0.0;  // drift implied by the mechanical slack and the damage heating factor
  double closure = 0.0;   // drift - expected
  double scale = 0.0;     // |total energy|, floored
  double relative_drift = 0.0;
  bool closure_pass = true;
  bool conserving_pass = true;  // only meaningful for insulated unforced runs
};

/// Conservation tolerance tol_conserve is relative to the total energy.
TotalCheck total_energy_check(const EnergyLedger& l, double tol_conserve = 1e-8);

/// Entropy production over one step for the given dissipation rate field; conductivity from the state.
/// Sets *skipped and returns 0 when min theta <= theta_floor.
double entropy_production(const State& s, const ScalarField& dissipation, double tau, const Problem& p,
                          double theta_floor = 1e-12, bool* skipped = nullptr);

/// Two-phase similarity solution: liquid on 0 < x < front(t), held at theta_hot at x = 0.
struct StefanParams {
  double c_solid = 1.0;
  double c_liquid = 1.0;
  double k_solid = 1.0;
  double k_liquid = 1.0;
  double latent = 1.0;
  double theta_pt = 1.0;
  double theta_init = 0.5;
  double theta_hot = 1.5;
};

class StefanOracle {
 public:
  /// Throws std::invalid_argument when the root is not bracketed.
  explicit StefanOracle(const StefanParams& sp);
  double lambda() const { return lambda_; }
  double front(double t) const;
  double theta(double x, double t) const;
  /// Coefficient h0 of the surface flux h0 / sqrt(t) that reproduces the solution.
  double flux_coefficient() const;
  /// Residual of the transcendental equation at lambda.
  double residual(double lambda) const;

 private:
  StefanParams sp_;
  double Dl_, Ds_;
  double lambda_ = 0.0;
};

struct DispersionMeasurement {
  double velocity = 0.0;
  double lag = 0.0;
  double correlation = 0.0;  // normalized peak value
  bool inconclusive = false;
};

/// Phase velocity from two probe series sampled every dt, probe b downstream of a by separation.
/// Lags are searched in [0, max_lag]; the peak is refined by parabolic interpolation.
DispersionMeasurement dispersion_measurement(const std::vector<double>& a, const std::vector<double>& b,
                                             double dt, double separation, double max_lag,
                                             double noise_floor = 1e-14);

/// True when the mean-free series changes sign at least twice.
bool propagating_mode_detected(const std::vector<double>& probe, double noise_floor = 1e-14);

}  // namespace thermo
