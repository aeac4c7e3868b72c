#include "thermo/run.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace thermo {

namespace {

template <class F>
void for_cells(const Grid& g, F&& f) {
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) f(i, j);
}

void fill_bounds(LedgerRow& row, const State& s, const Grid& g) {
  row.min_alpha = row.min_chi = row.min_theta = std::numeric_limits<double>::infinity();
  row.max_alpha = row.max_chi = -std::numeric_limits<double>::infinity();
  for_cells(g, [&](int i, int j) {
    row.min_alpha = std::min(row.min_alpha, s.alpha(i, j));
    row.max_alpha = std::max(row.max_alpha, s.alpha(i, j));
    row.min_chi = std::min(row.min_chi, s.chi(i, j));
    row.max_chi = std::max(row.max_chi, s.chi(i, j));
    row.min_theta = std::min(row.min_theta, s.theta(i, j));
  });
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_fields(const std::string& path, const State& s, const Problem& p) {
  const Grid& g = p.grid;
  ScalarField w = enthalpy_field(s, p.mat, g);
  ScalarField devE(g, 0.0), sphE(g, 0.0), pin(g, 0.0);
  for_cells(g, [&](int i, int j) {
    devE(i, j) = norm(dev(s.E(i, j)));
    sphE(i, j) = norm(sph(s.E(i, j)));
    pin(i, j) = norm(s.Pi(i, j));
  });
  write_vtk(path, g,
            {{"theta", &s.theta},
             {"chi", &s.chi},
             {"alpha", &s.alpha},
             {"enthalpy", &w},
             {"dev_strain", &devE},
             {"sph_strain", &sphE},
             {"creep_rate", &pin}},
            {{"velocity", &s.v}});
}

// Per-run diagnostic accumulators.
struct StefanTrack {
  std::vector<double> t, front, exact;
};

struct DispersionTrack {
  std::vector<int> wavelengths;
  std::vector<std::vector<double>> probe_a, probe_b;
  bool uniform_dt = true;
};

struct RotorTrack {
  double sph0 = 0.0, dev0 = 0.0;
  double max_sph_drift = 0.0, max_dev_drift = 0.0;
  double max_skew = 0.0, max_tr_pi = 0.0, max_tr_p = 0.0;
};

std::pair<double, double> strain_invariants(const State& s, const Grid& g) {
  double a = 0.0, b = 0.0;
  for_cells(g, [&](int i, int j) {
    a += norm2(sph(s.E(i, j)));
    b += norm2(dev(s.E(i, j)));
  });
  return {std::sqrt(a * g.cell_volume()), std::sqrt(b * g.cell_volume())};
}

void record_dispersion(DispersionTrack& d, const State& s, const Grid& g) {
  const int n = g.nx();
  for (std::size_t m = 0; m < d.wavelengths.size(); ++m) {
    const double lam = d.wavelengths[m] * g.h[0];
    const double k = 2.0 * M_PI / lam;
    std::complex<double> a{0.0, 0.0};
    for (int i = 0; i < n; ++i) a += s.v(i)[0] * std::exp(std::complex<double>(0.0, -k * g.center(0, i)));
    a *= 2.0 / n;
    // Mode-filtered probes at x = 0 and x = lambda / 4.
    d.probe_a[m].push_back(a.real());
    d.probe_b[m].push_back((a * std::exp(std::complex<double>(0.0, k * lam / 4.0))).real());
  }
}

}  // namespace

const std::string& energy_csv_header() {
  static const std::string h =
      "step,time,tau,kinetic,stored,damage_gradient,enthalpy,total,diss_maxwell,diss_stokes,diss_hyper,"
      "diss_damage,diss_creep_gradient,work_force,work_heat,adiabatic,q_penalty,dropped_inertia,"
      "entropy_production,mech_slack,total_drift,outer_iterations,max_residual,min_alpha,max_alpha,min_chi,"
      "max_chi,min_theta";
  return h;
}

std::string energy_csv_row(const LedgerRow& r) {
  const StepChannels& c = r.channels;
  std::string s = std::to_string(r.step);
  for (double v : {r.time, r.tau, r.energy.kinetic, r.energy.stored, r.energy.damage_gradient, r.energy.enthalpy,
                   r.energy.total(), c.diss_maxwell, c.diss_stokes, c.diss_hyper, c.diss_damage,
                   c.diss_creep_gradient, c.work_force, c.work_heat, c.adiabatic, c.q_penalty, c.dropped_inertia,
                   c.entropy_production, r.mech_slack, r.total_drift})
    s += "," + fmt(v);
  s += "," + std::to_string(r.outer_iterations);
  for (double v : {r.max_residual, r.min_alpha, r.max_alpha, r.min_chi, r.max_chi, r.min_theta}) s += "," + fmt(v);
  return s;
}

double phase_front(const ScalarField& chi, const Grid& g) {
  const int n = g.nx();
  if (chi(0) < 0.5) return 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    if (chi(i) >= 0.5 && chi(i + 1) < 0.5) {
      const double x0 = g.center(0, i), x1 = g.center(0, i + 1);
      return x0 + (chi(i) - 0.5) / (chi(i) - chi(i + 1)) * (x1 - x0);
    }
  }
  return g.h[0] * n;
}

RunResult run(const RunConfig& cfg, const RunOptions& opt) {
  const Problem& p = cfg.problem;
  const Grid& g = p.grid;
  const int steps = opt.steps > 0 ? opt.steps : cfg.steps;
  const double tau = opt.tau > 0 ? opt.tau : cfg.tau;
  const bool files = !opt.out_dir.empty();
  RunResult res;
  res.outer_tol = p.solver.tol;
  res.conserving_checked = cfg.insulated_unforced();

  std::ofstream csv;
  if (files) {
    std::filesystem::create_directories(opt.out_dir);
    csv.open(opt.out_dir + "/energy.csv");
    if (!csv) throw std::runtime_error("cannot write " + opt.out_dir + "/energy.csv");
    csv << energy_csv_header() << "\n";
  }
  auto vtk_name = [&](int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "/fields_%04d.vtk", k);
    return opt.out_dir + buf;
  };

  State cur = initial_state(cfg);
  LedgerRow row0;
  row0.time = cur.time;
  row0.energy = energy_totals(cur, p);
  fill_bounds(row0, cur, g);
  res.rows.push_back(row0);
  if (files) {
    csv << energy_csv_row(row0) << "\n";
    write_fields(vtk_name(0), cur, p);
  }

  StefanTrack stefan;
  std::optional<StefanOracle> oracle;
  if (cfg.diagnostic == Diagnostic::stefan) oracle.emplace(similarity_params(cfg));
  DispersionTrack disp;
  if (cfg.diagnostic == Diagnostic::dispersion) {
    disp.wavelengths = cfg.initial.wavelengths;
    disp.probe_a.resize(disp.wavelengths.size());
    disp.probe_b.resize(disp.wavelengths.size());
    record_dispersion(disp, cur, g);
  }
  RotorTrack rotor;
  std::tie(rotor.sph0, rotor.dev0) = strain_invariants(cur, g);

  int step_no = 0;
  try {
    for (int k = 1; k <= steps; ++k) {
      const AdvanceResult adv = advance(cur, tau, p);
      State prev = cur;
      for (std::size_t s = 0; s < adv.reports.size(); ++s) {
        const State& next = adv.history[s];
        const StepReport& rep = adv.reports[s];
        ++step_no;
        const EnergyLedger led = make_ledger(prev, next, rep, p);
        const MechCheck mc = mech_energy_check(led, p.solver.tol);
        const TotalCheck tc = total_energy_check(led);
        LedgerRow row;
        row.step = step_no;
        row.time = next.time;
        row.tau = rep.tau;
        row.energy = led.next;
        row.channels = rep.channels;
        row.mech_slack = mc.slack;
        row.mech_tol = mc.tol;
        row.total_drift = tc.drift;
        row.closure = tc.closure;
        row.outer_iterations = rep.outer_iterations;
        row.max_residual = rep.residuals.max();
        fill_bounds(row, next, g);
        res.rows.push_back(row);
        if (files) csv << energy_csv_row(row) << "\n";

        if (!mc.pass) res.mech_pass = false;
        const double ratio = mc.tol > 0 ? mc.slack / mc.tol : (mc.slack >= 0 ? 0.0 : -1.0);
        res.worst_slack_ratio = std::min(res.worst_slack_ratio, ratio);
        res.max_closure = std::max(res.max_closure, std::abs(tc.closure) / tc.scale);
        if (!tc.closure_pass) res.closure_pass = false;
        if (res.conserving_checked) {
          res.max_relative_drift = std::max(res.max_relative_drift, std::abs(tc.relative_drift));
          if (!tc.conserving_pass) res.conserving_pass = false;
        }
        if (!(row.min_alpha >= 0.0 && row.max_alpha <= 1.0 && row.min_chi >= 0.0 && row.max_chi <= 1.0 &&
              row.min_theta >= 0.0))
          res.bounds_pass = false;
        res.alpha_clamped += rep.alpha_clamped;
        res.theta_clamped += rep.theta_clamped;
        res.enthalpy_warning = res.enthalpy_warning || rep.enthalpy_warning;
        res.final_residuals = rep.residuals;
        if (std::abs(rep.tau - tau) > 1e-15 * tau) disp.uniform_dt = false;

        if (oracle) {
          stefan.t.push_back(next.time);
          stefan.front.push_back(phase_front(next.chi, g));
          stefan.exact.push_back(oracle->front(next.time));
        }
        if (cfg.diagnostic == Diagnostic::dispersion) record_dispersion(disp, next, g);
        if (cfg.diagnostic == Diagnostic::rotor) {
          const auto [a, b] = strain_invariants(next, g);
          rotor.max_sph_drift = std::max(rotor.max_sph_drift, std::abs(a - rotor.sph0));
          rotor.max_dev_drift = std::max(rotor.max_dev_drift, std::abs(b - rotor.dev0));
          for_cells(g, [&](int i, int j) {
            const Tensor2 F = next.E(i, j).full();
            rotor.max_skew = std::max(rotor.max_skew, norm(F - transpose(F)) / 2.0);
            rotor.max_tr_pi = std::max(rotor.max_tr_pi, std::abs(trace(next.Pi(i, j))));
            rotor.max_tr_p = std::max(rotor.max_tr_p, std::abs(trace(next.P(i, j))));
          });
        }
        prev = next;
      }
      cur = adv.state;
      if (files && cfg.output_every > 0 && k % cfg.output_every == 0 && k != steps)
        write_fields(vtk_name(k), cur, p);
    }
    res.completed = true;
  } catch (const NonconvergenceError& e) {
    res.error = e.what();
    res.final_residuals = e.residuals;
  } catch (const std::invalid_argument& e) {
    res.error = e.what();
  }
  res.final_state = cur;
  if (files) write_fields(vtk_name(res.completed ? steps : step_no), cur, p);

  // Scenario diagnostics.
  nlohmann::json& d = res.diagnostics;
  if (oracle) {
    double worst = 0.0;
    nlohmann::json series = nlohmann::json::array();
    for (std::size_t k = 0; k < stefan.t.size(); ++k) {
      if (stefan.t[k] > 10.0 * tau) worst = std::max(worst, std::abs(stefan.front[k] - stefan.exact[k]) / stefan.exact[k]);
      series.push_back({stefan.t[k], stefan.front[k], stefan.exact[k]});
    }
    d["stefan"] = {{"lambda", oracle->lambda()},
                   {"flux_coefficient", oracle->flux_coefficient()},
                   {"omega", p.mat.omega},
                   {"max_relative_front_error", worst},
                   {"front_series", series}};
  }
  if (cfg.diagnostic == Diagnostic::dispersion) {
    nlohmann::json table = nlohmann::json::array();
    const double c0 = std::sqrt(p.mat.K_e / p.mat.rho);
    for (std::size_t m = 0; m < disp.wavelengths.size(); ++m) {
      const double lam = disp.wavelengths[m] * g.h[0];
      DispersionMeasurement meas =
          dispersion_measurement(disp.probe_a[m], disp.probe_b[m], tau, lam / 4.0, lam / (2.0 * c0));
      meas.inconclusive = meas.inconclusive || !disp.uniform_dt;
      const auto predicted = dispersion_velocity(lam, p.mat);
      nlohmann::json e = {{"wavelength", lam},
                          {"wavelength_cells", disp.wavelengths[m]},
                          {"measured", meas.velocity},
                          {"correlation", meas.correlation},
                          {"inconclusive", meas.inconclusive},
                          {"propagating", propagating_mode_detected(disp.probe_a[m])}};
      if (predicted) {
        e["predicted"] = *predicted;
        e["relative_error"] = std::abs(meas.velocity - *predicted) / *predicted;
      } else {
        e["predicted"] = nullptr;
      }
      table.push_back(e);
    }
    d["dispersion"] = table;
  }
  if (cfg.diagnostic == Diagnostic::rotor) {
    d["rotor"] = {{"max_skew_strain", rotor.max_skew},
                  {"max_trace_creep", rotor.max_tr_pi},
                  {"max_trace_inelastic", rotor.max_tr_p},
                  {"sph_strain_l2_initial", rotor.sph0},
                  {"dev_strain_l2_initial", rotor.dev0},
                  {"max_sph_strain_drift", rotor.max_sph_drift},
                  {"max_dev_strain_drift", rotor.max_dev_drift}};
  }

  if (files) {
    std::ofstream rep(opt.out_dir + "/report.json");
    rep << report_json(cfg, res).dump(2) << "\n";
  }
  return res;
}

nlohmann::json report_json(const RunConfig& cfg, const RunResult& r) {
  const LedgerRow& last = r.rows.back();
  double min_a = 1, max_a = 0, min_c = 1, max_c = 0, min_t = std::numeric_limits<double>::infinity();
  for (const auto& row : r.rows) {
    min_a = std::min(min_a, row.min_alpha);
    max_a = std::max(max_a, row.max_alpha);
    min_c = std::min(min_c, row.min_chi);
    max_c = std::max(max_c, row.max_chi);
    min_t = std::min(min_t, row.min_theta);
  }
  nlohmann::json j;
  j["scenario"] = cfg.name;
  j["steps"] = last.step;
  j["time"] = last.time;
  j["completed"] = r.completed;
  if (!r.error.empty()) j["error"] = r.error;
  j["outer_tol"] = r.outer_tol;
  j["final_residuals"] = {{"momentum", r.final_residuals.momentum}, {"strain", r.final_residuals.strain},
                          {"creep", r.final_residuals.creep},       {"damage", r.final_residuals.damage},
                          {"heat", r.final_residuals.heat},         {"chi", r.final_residuals.chi}};
  j["audit"] = {{"strict", cfg.strict_audit},
                {"mech_pass", r.mech_pass},
                {"worst_slack_ratio", r.worst_slack_ratio},
                {"closure_pass", r.closure_pass},
                {"max_closure", r.max_closure},
                {"conserving_checked", r.conserving_checked},
                {"conserving_pass", r.conserving_pass},
                {"max_relative_drift", r.max_relative_drift},
                {"pass", r.audit_pass()}};
  j["bounds"] = {{"min_alpha", min_a}, {"max_alpha", max_a}, {"min_chi", min_c},
                 {"max_chi", max_c},   {"min_theta", min_t}, {"pass", r.bounds_pass}};
  j["flags"] = {{"alpha_clamped_cells", r.alpha_clamped},
                {"theta_clamped_cells", r.theta_clamped},
                {"enthalpy_warning", r.enthalpy_warning}};
  j["diagnostics"] = r.diagnostics;
  return j;
}

}  // namespace thermo
