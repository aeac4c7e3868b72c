#include "thermo/materials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace thermo {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Curve::Curve(std::vector<std::pair<double, double>> pts) : pts_(std::move(pts)) {
  require(!pts_.empty(), "curve needs at least one breakpoint");
  for (std::size_t k = 0; k < pts_.size(); ++k) {
    require(std::isfinite(pts_[k].first) && std::isfinite(pts_[k].second),
            "curve breakpoints must be finite");
    if (k > 0) require(pts_[k].first > pts_[k - 1].first, "curve abscissae must increase strictly");
  }
}

double Curve::operator()(double x) const {
  if (pts_.empty()) return 0.0;
  if (x <= pts_.front().first) return pts_.front().second;
  if (x >= pts_.back().first) return pts_.back().second;
  auto it = std::upper_bound(pts_.begin(), pts_.end(), x,
                             [](double v, const auto& p) { return v < p.first; });
  const auto& [x1, y1] = *it;
  const auto& [x0, y0] = *(it - 1);
  return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

double Curve::slope(double x) const {
  if (pts_.size() < 2 || x <= pts_.front().first || x >= pts_.back().first) return 0.0;
  auto it = std::upper_bound(pts_.begin(), pts_.end(), x,
                             [](double v, const auto& p) { return v < p.first; });
  return (it->second - (it - 1)->second) / (it->first - (it - 1)->first);
}

double Curve::min_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : pts_) m = std::min(m, p.second);
  return m;
}

double Curve::max_value() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : pts_) m = std::max(m, p.second);
  return m;
}

bool Curve::non_increasing() const {
  for (std::size_t k = 1; k < pts_.size(); ++k)
    if (pts_[k].second > pts_[k - 1].second) return false;
  return true;
}

bool Curve::non_decreasing() const {
  for (std::size_t k = 1; k < pts_.size(); ++k)
    if (pts_[k].second < pts_[k - 1].second) return false;
  return true;
}

StepCurve::StepCurve(std::vector<std::pair<double, double>> pts) : pts_(std::move(pts)) {
  require(!pts_.empty(), "step curve needs at least one breakpoint");
  require(pts_.front().first == 0.0, "step curve must start at 0");
  for (std::size_t k = 1; k < pts_.size(); ++k)
    require(pts_[k].first > pts_[k - 1].first, "step curve abscissae must increase strictly");
}

int StepCurve::piece(double x) const {
  auto it = std::upper_bound(pts_.begin(), pts_.end(), x,
                             [](double v, const auto& p) { return v < p.first; });
  return std::max(0, static_cast<int>(it - pts_.begin()) - 1);
}

double StepCurve::operator()(double x) const { return pts_[piece(x)].second; }

double StepCurve::min_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : pts_) m = std::min(m, p.second);
  return m;
}

void MaterialParams::validate(int d) const {
  require(rho > 0, "rho must be positive");
  require(K_e > 0, "K_e must be positive");
  require(G_e0 > 0, "G_e0 must be positive");
  require(eps_g >= 0, "eps_g must be nonnegative");
  require(K_v >= 0 && G_v >= 0, "viscosity moduli must be nonnegative");
  require(kappa > 0, "kappa must be positive");
  require(varkappa >= 0, "varkappa must be nonnegative");
  require(nu > 0, "nu must be positive");
  require(p_exp > d, "p_exp must exceed the dimension");
  require(G_d > 0, "G_d must be positive");
  require(sigma_f >= 0, "sigma_f must be nonnegative");
  require(eps_zeta > 0, "eps_zeta must be positive");
  require(omega > 0, "omega must be positive");
  require(theta_pt > 0, "theta_pt must be positive");
  require(latent_l >= 0, "latent_l must be nonnegative");
  require(eps_reg >= 0, "eps_reg must be nonnegative");
  require(d == 1 || eps_reg > 0, "eps_reg must be positive when d > 1");
  require(x_cap >= 0, "x_cap must be nonnegative");
  require(G_m_curve.min_value() > 0, "G_m curve must have a positive floor");
  require(G_m_curve.non_increasing() || G_m_curve.non_decreasing(), "G_m curve must be monotone");
  require(A_curve.min_value() >= 0, "A curve must be nonnegative");
  require(A_curve.non_increasing(), "A curve must be non-increasing");
  require(c_curve.min_value() > 0, "heat capacity must be positive");
  require(conductivity_curve.min_value() > 0, "conductivity must be positive");
  if (glen.enabled) {
    require(glen.q > 1.0, "creep exponent q must exceed 1");
    require(glen.G0 > 0, "creep modulus G0 must be positive");
  }
}

double MaterialParams::conductivity(double /*alpha*/, double w) const {
  return conductivity_curve(w);
}

SymTensor2 isotropic_C_apply(const SymTensor2& E, double K_e, double G_e) {
  return (E.d * K_e) * sph(E) + (2.0 * G_e) * dev(E);
}

SymTensor2 isotropic_D_apply(const SymTensor2& Ev, double K_v, double G_v) {
  return (Ev.d * K_v) * sph(Ev) + (2.0 * G_v) * dev(Ev);
}

namespace {

EnergyValue stored_energy_impl(const SymTensor2& E, double alpha, double eps,
                               const MaterialParams& m) {
  const int d = E.d;
  const double tr = trace(E);
  const SymTensor2 D = dev(E);
  const double x = norm2(D);
  const double root = std::sqrt(1.0 + eps * x);
  const double f = x / root;
  const double fprime = (1.0 + 0.5 * eps * x) / (root * root * root);
  const double Ge = m.G_e(alpha);

  EnergyValue out;
  out.value = 0.5 * m.K_e * tr * tr + Ge * f + m.G_d * (1.0 - alpha) * (1.0 - alpha) / (2.0 * m.kappa);
  out.dE = (m.K_e * tr) * SymTensor2::identity(d) + (2.0 * Ge * fprime) * D;
  out.dalpha = m.G_e_prime(alpha) * f - m.G_d * (1.0 - alpha) / m.kappa;
  return out;
}

}  // namespace

EnergyValue stored_energy(const SymTensor2& E, double alpha, const MaterialParams& m) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("alpha outside [0,1]");
  return stored_energy_impl(E, alpha, 0.0, m);
}

EnergyValue stored_energy_reg(const SymTensor2& E, double alpha, double eps_reg,
                              const MaterialParams& m) {
  if (eps_reg < 0) throw std::invalid_argument("eps_reg must be nonnegative");
  return stored_energy_impl(E, alpha, eps_reg, m);
}

double semiconvexity_constant(const MaterialParams& m, int d) {
  if (d == 1) return 0.0;
  if (m.eps_reg <= 0) return std::numeric_limits<double>::infinity();
  return 2.0 * m.G_e0 * (1.0 + 3.0 / std::sqrt(m.eps_reg));
}

double conj_stored_energy_iso(const SymTensor2& S, double K_e, double G_e) {
  const int d = S.d;
  const double tr = trace(S);
  const double x = norm2(dev(S));
  double out = tr * tr / (2.0 * d * d * K_e);
  if (x > 0.0) {
    if (!(G_e > 0.0)) throw std::domain_error("deviatoric stress with zero shear modulus");
    out += x / (4.0 * G_e);
  }
  return out;
}

double gamma_tilde(double theta, const MaterialParams& m) {
  if (theta < 0) throw std::domain_error("negative temperature");
  const auto& pts = m.c_curve.points();
  double g = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double lo = pts[k].first;
    const double hi = (k + 1 < pts.size()) ? pts[k + 1].first : std::numeric_limits<double>::infinity();
    if (theta <= lo) break;
    g += pts[k].second * (std::min(theta, hi) - lo);
  }
  return g;
}

namespace {

// Antiderivative of gamma_tilde(s)/s^2, continuous across pieces.
double gamma_over_s2_antiderivative(double s, const MaterialParams& m) {
  const auto& pts = m.c_curve.points();
  double F = 0.0;
  double G = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double lo = pts[k].first;
    const double hi = (k + 1 < pts.size()) ? pts[k + 1].first : std::numeric_limits<double>::infinity();
    const double c = pts[k].second;
    const double a = G - c * lo;
    auto piece = [&](double x) { return -a / x + c * std::log(x); };
    if (s <= hi) return F + piece(s) - (k == 0 ? 0.0 : piece(lo));
    F += (k == 0 ? piece(hi) : piece(hi) - piece(lo));
    G += c * (hi - lo);
  }
  return F;
}

}  // namespace

double phi_tilde(double theta, const MaterialParams& m) {
  if (theta < 0) throw std::domain_error("negative temperature");
  if (theta == 0.0) return 0.0;
  const double ref = m.theta_pt;
  return -theta * (gamma_over_s2_antiderivative(theta, m) - gamma_over_s2_antiderivative(ref, m));
}

HeatMaps heat_maps(double theta, const MaterialParams& m) {
  if (theta < 0) throw std::domain_error("negative temperature");
  HeatMaps h;
  h.gamma_tilde = gamma_tilde(theta, m);
  h.phi_thermal = phi_tilde(theta, m) - m.latent_l * std::max(0.0, theta / m.theta_pt - 1.0);
  return h;
}

double phi_thermal_prime(double theta, const MaterialParams& m) {
  if (theta <= 0) throw std::domain_error("temperature must be positive");
  const double dtilde = (phi_tilde(theta, m) - gamma_tilde(theta, m)) / theta;
  return dtilde - (theta > m.theta_pt ? m.latent_l / m.theta_pt : 0.0);
}

double enthalpy_of(double theta, double chi, const MaterialParams& m) {
  return gamma_tilde(theta, m) + m.latent_l * chi;
}

double theta_of(double vartheta, const MaterialParams& m, bool* clamped) {
  if (clamped) *clamped = false;
  if (vartheta < 0.0) {
    if (clamped) *clamped = true;
    return 0.0;
  }
  const auto& pts = m.c_curve.points();
  double G = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double lo = pts[k].first;
    const double c = pts[k].second;
    if (k + 1 == pts.size()) return lo + (vartheta - G) / c;
    const double hi = pts[k + 1].first;
    const double Gnext = G + c * (hi - lo);
    if (vartheta <= Gnext) return lo + (vartheta - G) / c;
    G = Gnext;
  }
  return 0.0;
}

double beta_of_w(double w, const MaterialParams& m) {
  const double ws = gamma_tilde(m.theta_pt, m);
  if (w <= ws) return theta_of(w, m);
  if (w <= ws + m.latent_l) return m.theta_pt;
  return theta_of(w - m.latent_l, m);
}

double zeta_damage(double /*alpha*/, double w, double rate, const MaterialParams& m) {
  const double neg = std::min(0.0, rate);
  const double pos = std::max(0.0, rate);
  return -m.sigma_f * neg + m.A(w) * pos * pos + m.eps_zeta * rate * rate;
}

std::pair<double, double> zeta_subgradient_interval(double /*alpha*/, double w, double rate,
                                                    const MaterialParams& m) {
  if (rate > 0) {
    const double g = 2.0 * (m.A(w) + m.eps_zeta) * rate;
    return {g, g};
  }
  if (rate < 0) {
    const double g = -m.sigma_f + 2.0 * m.eps_zeta * rate;
    return {g, g};
  }
  return {-m.sigma_f, 0.0};
}

double upsilon(double x, double x_cap) {
  const double ax = std::abs(x);
  const double mag = std::min(ax, x_cap + std::sqrt(ax));
  return x < 0 ? -mag : mag;
}

double upsilon_prime(double x, double x_cap) {
  const double ax = std::abs(x);
  if (ax <= x_cap + std::sqrt(ax)) return 1.0;
  return 0.5 / std::sqrt(ax);
}

std::optional<double> dispersion_velocity(double lambda, const MaterialParams& m) {
  if (!(lambda > 0)) throw std::invalid_argument("wavelength must be positive");
  const double r = m.K_e / m.rho - m.K_v * m.K_v / (4.0 * m.rho * m.rho * lambda * lambda);
  if (r <= 0) return std::nullopt;
  return std::sqrt(r);
}

CreepPotential glen_creep_potential(const DevTensor2& rate, double G0, double q) {
  if (!(q > 1.0)) throw std::invalid_argument("creep exponent q <= 1 is unsupported");
  const double r = norm(rate.sym());
  CreepPotential out;
  out.grad = SymTensor2(rate.dim());
  if (r == 0.0) return out;
  out.value = G0 * std::pow(r, q);
  out.grad = (G0 * q * std::pow(r, q - 2.0)) * rate.sym();
  return out;
}

}  // namespace thermo
