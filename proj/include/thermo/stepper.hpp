#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "thermo/grid.hpp"
#include "thermo/materials.hpp"

namespace thermo {

enum class MechanicsMode { dynamic, frozen, rigid_rotation };

struct SolverOptions {
  double tol = 1e-9;
  int max_outer = 100;
  int max_inner = 400;
  // Inner solves stop at inner_factor * tol.
  double inner_factor = 1e-2;
};

struct Problem {
  Grid grid;
  BoundarySpec bc;
  MaterialParams mat;
  MechanicsMode mode = MechanicsMode::dynamic;
  double rotation_rate = 0.0;
  std::array<double, 2> rotation_center{0.0, 0.0};
  VecField force;  // body force density; empty means zero
  bool reconstruct_P = false;
  SolverOptions solver;

  /// Throws std::invalid_argument on any inconsistent setting.
  void validate() const;
};

struct State {
  double time = 0.0;
  VecField v;
  SymField E;
  SymField Pi;  // deviatoric
  ScalarField alpha;
  ScalarField theta;
  ScalarField chi;
  SymField P;  // reconstructed inelastic strain; deviatoric

  /// Zero velocity and strain, undamaged, solid at the given temperature.
  static State rest(const Problem& p, double theta0);
};

/// Enthalpy field w = gamma_tilde(theta) + latent * chi.
ScalarField enthalpy_field(const State& s, const MaterialParams& m, const Grid& g);

struct StressBundle {
  SymField S;        // Piola-Kirchhoff: derivative of the regularized stored energy
  SymField Sigma;    // S plus the isotropic energy pressure
  SymField K;        // capillarity-type stress from the damage gradient
  SymField Dstress;  // viscous plus hyperviscous
  SymField T;        // Sigma + K + Dstress
};

StressBundle stress_bundle(const State& s, const Problem& p);

/// Per-step energy channels, already multiplied by tau and the cell volume.
struct StepChannels {
  double diss_maxwell = 0.0;
  double diss_stokes = 0.0;
  double diss_hyper = 0.0;
  double diss_damage = 0.0;
  double diss_creep_gradient = 0.0;
  double work_force = 0.0;
  double work_heat = 0.0;
  double adiabatic = 0.0;
  double q_penalty = 0.0;
  double dropped_inertia = 0.0;
  double entropy_production = 0.0;
  bool entropy_skipped = false;
};

struct BlockResiduals {
  double momentum = 0.0;
  double strain = 0.0;
  double creep = 0.0;
  double damage = 0.0;
  double heat = 0.0;
  double chi = 0.0;
  double max() const;
};

struct StepReport {
  bool converged = false;
  int outer_iterations = 0;
  double tau = 0.0;
  BlockResiduals residuals;
  StepChannels channels;
  int alpha_clamped = 0;
  int theta_clamped = 0;
  bool enthalpy_warning = false;
};

class NonconvergenceError : public std::runtime_error {
 public:
  NonconvergenceError(const std::string& what, BlockResiduals r)
      : std::runtime_error(what), residuals(r) {}
  BlockResiduals residuals;
};

struct StepResult {
  State state;
  StepReport report;
};

/// Largest admissible step from the semi-convexity, damage-coercivity and velocity-gradient limits.
double tau_max(const State& prev, const Problem& p);

/// One implicit step. Throws std::invalid_argument if tau exceeds tau_max, NonconvergenceError
/// if the outer sweep does not reach the tolerance.
StepResult step(const State& prev, double tau, const Problem& p);

/// Steps of size tau, halving on rejection or nonconvergence; one report per accepted sub-step.
struct AdvanceResult {
  State state;
  std::vector<StepReport> reports;
  std::vector<State> history;  // state after each sub-step
};
AdvanceResult advance(const State& prev, double tau, const Problem& p, int max_halvings = 8);

// Sub-operations. Each evaluates or solves one block with the other fields of `cur` held fixed.

/// Momentum residual with the strain of `cur` (no inner strain solve).
VecField momentum_residual(const State& cur, const State& prev, double tau, const Problem& p);
/// Residual of the strain transport equation.
SymField strain_residual(const State& cur, const State& prev, double tau, const Problem& p);
/// Solves the strain transport equation for E given v and Pi.
SymField strain_update(const State& cur, const State& prev, double tau, const Problem& p);
/// Solves the creep equation; with w_prev the lagged enthalpy.
SymField creep_solve(const SymField& S, const ScalarField& w_prev, const Problem& p);
/// Solves the damage inclusion; returns the new damage field.
ScalarField damage_solve(const State& cur, const State& prev, double tau, const Problem& p);

struct HeatSources {
  ScalarField dissipation;  // total dissipative heating rate per cell
  ScalarField adiabatic;    // phi(theta) div v per cell
};
/// Solves the enthalpy balance jointly with the phase fraction; writes theta and chi into cur.
void heat_solve(State& cur, const State& prev, double tau, const HeatSources& src, const Problem& p,
                int* theta_clamped = nullptr);
/// Phase fraction for a given temperature field.
ScalarField chi_solve(const State& cur, const State& prev, double tau, const Problem& p);

/// Integrates the corotational transport of P with source Pi over one step.
SymField reconstruct_P(const State& cur, const State& prev, double tau, const Problem& p);

/// Prescribed rigid velocity including ghost cells.
VecField rigid_velocity(const Problem& p);

}  // namespace thermo
