#include "thermo/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace thermo {

namespace {

template <class F>
void for_cells(const Grid& g, F&& f) {
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) f(i, j);
}

constexpr double kFloor = 1e-300;

}  // namespace

EnergyTotals energy_totals(const State& s0, const Problem& p) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  State s = s0;
  fill_ghosts(s.alpha, g, p.bc);
  EnergyTotals e;
  double ke = 0.0, st = 0.0, w = 0.0;
  for_cells(g, [&](int i, int j) {
    const Vec& v = s.v(i, j);
    ke += 0.5 * m.rho * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    st += stored_energy_reg(s.E(i, j), std::clamp(s.alpha(i, j), 0.0, 1.0), m.eps_reg, m).value;
    w += enthalpy_of(std::max(0.0, s.theta(i, j)), s.chi(i, j), m);
  });
  const double vol = g.cell_volume();
  e.kinetic = ke * vol;
  e.stored = st * vol;
  e.enthalpy = w * vol;
  e.damage_gradient = 0.5 * m.kappa * face_gradient_energy(s.alpha, g, p.bc);
  return e;
}

EnergyLedger make_ledger(const State& prev, const State& next, const StepReport& rep, const Problem& p) {
  return {energy_totals(prev, p), energy_totals(next, p), rep.channels, rep.tau};
}

MechCheck mech_energy_check(const EnergyLedger& l, double outer_tol) {
  const StepChannels& c = l.channels;
  MechCheck r;
  const double diss =
      c.diss_maxwell + c.diss_stokes + c.diss_hyper + c.diss_damage + c.diss_creep_gradient;
  r.lhs = l.next.mechanical() + diss;
  r.rhs = l.prev.mechanical() + c.work_force - c.adiabatic + c.q_penalty;
  r.slack = r.rhs - r.lhs;
  r.scale = std::max({std::abs(l.prev.total()), std::abs(l.next.total()), std::abs(c.work_force),
                      std::abs(c.adiabatic), std::abs(diss), c.q_penalty, kFloor});
  r.tol = 10.0 * outer_tol * r.scale;
  r.pass = r.slack >= -r.tol;
  if (!r.pass) {
    std::ostringstream os;
    os.precision(17);
    os << "slack=" << r.slack << " tol=" << r.tol << " kinetic " << l.prev.kinetic << "->" << l.next.kinetic
       << " stored " << l.prev.stored << "->" << l.next.stored << " damage_gradient "
       << l.prev.damage_gradient << "->" << l.next.damage_gradient << " maxwell=" << c.diss_maxwell
       << " stokes=" << c.diss_stokes << " hyper=" << c.diss_hyper << " damage=" << c.diss_damage
       << " creep_gradient=" << c.diss_creep_gradient << " work_force=" << c.work_force
       << " adiabatic=" << c.adiabatic << " q_penalty=" << c.q_penalty;
    r.breakdown = os.str();
  }
  return r;
}

TotalCheck total_energy_check(const EnergyLedger& l, double tol_conserve) {
  const StepChannels& c = l.channels;
  MechCheck mech = mech_energy_check(l, 0.0);
  TotalCheck r;
  r.drift = (l.next.total() - l.prev.total()) - c.work_force - c.work_heat;
  r.expected = -mech.slack - std::pow(l.tau, 0.25) * c.diss_damage + c.q_penalty;
  r.closure = r.drift - r.expected;
  r.scale = std::max({std::abs(l.prev.total()), std::abs(l.next.total()), kFloor});
  r.relative_drift = r.drift / r.scale;
  r.closure_pass = std::abs(r.closure) <= tol_conserve * r.scale;
  r.conserving_pass = std::abs(r.relative_drift) <= tol_conserve;
  return r;
}

double entropy_production(const State& s, const ScalarField& dissipation, double tau, const Problem& p,
                          double theta_floor, bool* skipped) {
  const Grid& g = p.grid;
  double tmin = std::numeric_limits<double>::infinity();
  for_cells(g, [&](int i, int j) { tmin = std::min(tmin, s.theta(i, j)); });
  if (skipped) *skipped = !(tmin > theta_floor);
  if (!(tmin > theta_floor)) return 0.0;
  ScalarField k(g, 0.0);
  for_cells(g, [&](int i, int j) {
    k(i, j) = p.mat.conductivity(s.alpha(i, j), enthalpy_of(s.theta(i, j), s.chi(i, j), p.mat));
  });
  double sum = 0.0;
  for (int a = 0; a < g.d; ++a) {
    const int n = a == 0 ? g.nx() : g.ny();
    for_cells(g, [&](int i, int j) {
      int ni = i, nj = j;
      int& idx = a == 0 ? ni : nj;
      idx += 1;
      if (idx == n) {
        if (p.bc.axis[a] == AxisBC::wall) return;
        idx = 0;
      }
      const double kf = 2.0 * k(i, j) * k(ni, nj) / (k(i, j) + k(ni, nj));
      const double d = s.theta(ni, nj) - s.theta(i, j);
      sum += kf * d * d / (g.h[a] * g.h[a] * s.theta(i, j) * s.theta(ni, nj));
    });
  }
  for_cells(g, [&](int i, int j) { sum += dissipation(i, j) / s.theta(i, j); });
  return tau * sum * g.cell_volume();
}

StefanOracle::StefanOracle(const StefanParams& sp) : sp_(sp) {
  if (!(sp.c_solid > 0 && sp.c_liquid > 0 && sp.k_solid > 0 && sp.k_liquid > 0 && sp.latent >= 0))
    throw std::invalid_argument("Stefan oracle needs positive material constants");
  if (!(sp.theta_hot > sp.theta_pt && sp.theta_pt >= sp.theta_init))
    throw std::invalid_argument("Stefan oracle needs theta_hot > theta_pt >= theta_init");
  Dl_ = sp.k_liquid / sp.c_liquid;
  Ds_ = sp.k_solid / sp.c_solid;
  double lo = 1e-12, hi = 10.0;
  double flo = residual(lo), fhi = residual(hi);
  if (!(flo < 0 && fhi > 0)) throw std::invalid_argument("Stefan root not bracketed");
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    const double fm = residual(mid);
    if (fm < 0)
      lo = mid;
    else
      hi = mid;
  }
  lambda_ = 0.5 * (lo + hi);
}

double StefanOracle::residual(double lam) const {
  const double mu = lam * std::sqrt(Dl_ / Ds_);
  const double pi = M_PI;
  const double liquid = sp_.k_liquid * (sp_.theta_hot - sp_.theta_pt) * std::exp(-lam * lam) /
                        (std::erf(lam) * std::sqrt(pi * Dl_));
  double solid = 0.0;
  if (sp_.theta_pt > sp_.theta_init) {
    // erfc underflows for large mu; use the asymptotic ratio exp(-mu^2)/erfc(mu) ~ sqrt(pi) mu.
    const double ec = std::erfc(mu);
    const double ratio = ec > 1e-300 ? std::exp(-mu * mu) / ec : std::sqrt(pi) * mu;
    solid = sp_.k_solid * (sp_.theta_pt - sp_.theta_init) * ratio / std::sqrt(pi * Ds_);
  }
  return sp_.latent * lam * std::sqrt(Dl_) - liquid + solid;
}

double StefanOracle::front(double t) const { return 2.0 * lambda_ * std::sqrt(Dl_ * t); }

double StefanOracle::theta(double x, double t) const {
  if (!(t > 0)) return x <= 0 ? sp_.theta_hot : sp_.theta_init;
  const double X = front(t);
  if (x < X)
    return sp_.theta_hot - (sp_.theta_hot - sp_.theta_pt) * std::erf(x / (2 * std::sqrt(Dl_ * t))) / std::erf(lambda_);
  const double mu = lambda_ * std::sqrt(Dl_ / Ds_);
  return sp_.theta_init +
         (sp_.theta_pt - sp_.theta_init) * std::erfc(x / (2 * std::sqrt(Ds_ * t))) / std::erfc(mu);
}

double StefanOracle::flux_coefficient() const {
  return sp_.k_liquid * (sp_.theta_hot - sp_.theta_pt) / (std::erf(lambda_) * std::sqrt(M_PI * Dl_));
}

DispersionMeasurement dispersion_measurement(const std::vector<double>& a, const std::vector<double>& b,
                                             double dt, double separation, double max_lag,
                                             double noise_floor) {
  DispersionMeasurement out;
  const std::size_t n = std::min(a.size(), b.size());
  auto mean = [n](const std::vector<double>& x) { return std::accumulate(x.begin(), x.begin() + n, 0.0) / n; };
  const double ma = mean(a), mb = mean(b);
  double amp = 0.0;
  for (std::size_t k = 0; k < n; ++k) amp = std::max({amp, std::abs(a[k] - ma), std::abs(b[k] - mb)});
  const int L = static_cast<int>(std::floor(max_lag / dt));
  if (n < 8 || amp <= noise_floor || L < 2 || static_cast<std::size_t>(L) + 4 >= n) {
    out.inconclusive = true;
    return out;
  }
  std::vector<double> corr(static_cast<std::size_t>(L) + 1);
  // Pearson correlation over each overlap window: a shifted, rescaled copy scores exactly 1.
  for (int lag = 0; lag <= L; ++lag) {
    const std::size_t m = n - static_cast<std::size_t>(lag);
    double sa = 0.0, sb = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      sa += a[k];
      sb += b[k + lag];
    }
    sa /= m;
    sb /= m;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double x = a[k] - sa, y = b[k + lag] - sb;
      sab += x * y;
      saa += x * x;
      sbb += y * y;
    }
    corr[static_cast<std::size_t>(lag)] = sab / std::sqrt(std::max(saa * sbb, kFloor));
  }
  const auto it = std::max_element(corr.begin() + 1, corr.end() - 1);
  const int k = static_cast<int>(it - corr.begin());
  const double y0 = corr[k - 1], y1 = corr[k], y2 = corr[k + 1];
  const double denom = y0 - 2 * y1 + y2;
  const double shift = denom != 0.0 ? 0.5 * (y0 - y2) / denom : 0.0;
  out.lag = (k + shift) * dt;
  out.correlation = y1;
  out.velocity = separation / out.lag;
  out.inconclusive = !(y1 > 0.5) || *it < corr.front();
  return out;
}

bool propagating_mode_detected(const std::vector<double>& probe, double noise_floor) {
  if (probe.size() < 3) return false;
  const double m = std::accumulate(probe.begin(), probe.end(), 0.0) / probe.size();
  int changes = 0;
  int last = 0;
  for (double x : probe) {
    const double y = x - m;
    if (std::abs(y) <= noise_floor) continue;
    const int s = y > 0 ? 1 : -1;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes >= 2;
}

}  // namespace thermo
