#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thermo/tensors.hpp"

namespace thermo {

/// Piecewise-linear curve through breakpoints; constant beyond the ends.
class Curve {
 public:
  Curve() = default;
  explicit Curve(std::vector<std::pair<double, double>> pts);
  static Curve constant(double value) { return Curve({{0.0, value}}); }

  double operator()(double x) const;
  double slope(double x) const;
  double min_value() const;
  double max_value() const;
  bool non_increasing() const;
  bool non_decreasing() const;
  bool empty() const { return pts_.empty(); }
  const std::vector<std::pair<double, double>>& points() const { return pts_; }

 private:
  std::vector<std::pair<double, double>> pts_;
};

/// Piecewise-constant curve: value_k on [x_k, x_{k+1}); first breakpoint at 0.
class StepCurve {
 public:
  StepCurve() = default;
  explicit StepCurve(std::vector<std::pair<double, double>> pts);
  static StepCurve constant(double value) { return StepCurve({{0.0, value}}); }

  double operator()(double x) const;
  int piece(double x) const;
  double min_value() const;
  const std::vector<std::pair<double, double>>& points() const { return pts_; }

 private:
  std::vector<std::pair<double, double>> pts_;
};

struct GlenLaw {
  bool enabled = false;
  double G0 = 1.0;
  double q = 4.0 / 3.0;
};

struct MaterialParams {
  double rho = 1.0;
  double K_e = 1.0;
  double G_e0 = 1.0;
  double eps_g = 1e-3;
  double K_v = 0.0;
  double G_v = 0.0;
  Curve G_m_curve = Curve::constant(1.0);
  double kappa = 1.0;
  double varkappa = 0.0;
  double nu = 1e-4;
  double p_exp = 4.0;
  double G_d = 1.0;
  double sigma_f = 1.0;
  Curve A_curve = Curve::constant(0.0);
  double eps_zeta = 0.1;
  double omega = 1.0;
  double theta_pt = 1.0;
  double latent_l = 1.0;
  StepCurve c_curve = StepCurve::constant(1.0);
  Curve conductivity_curve = Curve::constant(1.0);
  double eps_reg = 1.0;
  Curve buoyancy_b;  // empty means zero
  double x_cap = 1.0;
  GlenLaw glen;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate(int d) const;

  double G_e(double alpha) const { return G_e0 * (alpha * alpha + eps_g * eps_g); }
  double G_e_prime(double alpha) const { return 2.0 * G_e0 * alpha; }
  double G_m(double w) const { return G_m_curve(w); }
  double A(double w) const { return A_curve(w); }
  double conductivity(double alpha, double w) const;
  double buoyancy(double theta) const { return buoyancy_b.empty() ? 0.0 : buoyancy_b(theta); }
};

SymTensor2 isotropic_C_apply(const SymTensor2& E, double K_e, double G_e);
SymTensor2 isotropic_D_apply(const SymTensor2& Ev, double K_v, double G_v);

struct EnergyValue {
  double value = 0.0;
  SymTensor2 dE;
  double dalpha = 0.0;
};

EnergyValue stored_energy(const SymTensor2& E, double alpha, const MaterialParams& m);
EnergyValue stored_energy_reg(const SymTensor2& E, double alpha, double eps_reg,
                              const MaterialParams& m);
/// Curvature allowance of the regularized energy in the damage variable; zero when d = 1.
double semiconvexity_constant(const MaterialParams& m, int d);

double conj_stored_energy_iso(const SymTensor2& S, double K_e, double G_e);

struct HeatMaps {
  double gamma_tilde = 0.0;
  double phi_thermal = 0.0;
};

double gamma_tilde(double theta, const MaterialParams& m);
double phi_tilde(double theta, const MaterialParams& m);
HeatMaps heat_maps(double theta, const MaterialParams& m);
/// Derivative of the thermal free energy; the entropy is its negative.
double phi_thermal_prime(double theta, const MaterialParams& m);

double enthalpy_of(double theta, double chi, const MaterialParams& m);
/// Inverse of gamma_tilde; values below gamma_tilde(0) clamp to 0 and set *clamped.
double theta_of(double vartheta, const MaterialParams& m, bool* clamped = nullptr);
double beta_of_w(double w, const MaterialParams& m);

double zeta_damage(double alpha, double w, double rate, const MaterialParams& m);
std::pair<double, double> zeta_subgradient_interval(double alpha, double w, double rate,
                                                    const MaterialParams& m);

double upsilon(double x, double x_cap);
double upsilon_prime(double x, double x_cap);

std::optional<double> dispersion_velocity(double lambda, const MaterialParams& m);

struct CreepPotential {
  double value = 0.0;
  SymTensor2 grad;
};
CreepPotential glen_creep_potential(const DevTensor2& rate, double G0, double q);

}  // namespace thermo
