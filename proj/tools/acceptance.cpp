// Acceptance gate: one PASS/FAIL line per primary criterion; exit status is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "thermo/run.hpp"

using namespace thermo;

namespace {

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

struct ScenarioRun {
  std::string name;
  RunResult result;
  double seconds = 0.0;
};

ScenarioRun timed_run(const std::string& name, const std::filesystem::path& out) {
  const RunConfig cfg = load_scenario(name);
  RunOptions opt;
  opt.out_dir = out.string();
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioRun s{name, run(cfg, opt), 0.0};
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

SymTensor2 random_sym(int d, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  SymTensor2 S(d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) S(i, j) = u(rng);
  return S;
}

void constitutive_checks() {
  MaterialParams m;
  m.K_e = 2.0;
  m.G_e0 = 1.3;
  m.eps_g = 0.05;
  m.G_d = 0.7;
  m.kappa = 0.9;
  m.sigma_f = 0.8;
  m.eps_zeta = 0.1;
  m.A_curve = Curve({{0.5, 3.0}, {1.5, 0.0}});
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ua(0.05, 0.95), unit(0.0, 1.0);

  // Gradients against central differences, plain and regularized.
  double worst = 0.0;
  for (double eps : {0.0, m.eps_reg}) {
    for (int k = 0; k < 100; ++k) {
      const int d = 2 + k % 2;
      const SymTensor2 E = random_sym(d, rng, 1.0);
      const double a = ua(rng);
      SymTensor2 dir = random_sym(d, rng, 1.0);
      dir = (1.0 / norm(dir)) * dir;
      const EnergyValue ev = stored_energy_reg(E, a, eps, m);
      const double h = 1e-5;
      const double fdE = (stored_energy_reg(E + h * dir, a, eps, m).value -
                          stored_energy_reg(E - h * dir, a, eps, m).value) / (2 * h);
      const double fda =
          (stored_energy_reg(E, a + h, eps, m).value - stored_energy_reg(E, a - h, eps, m).value) / (2 * h);
      worst = std::max(worst, std::abs(fdE - ddot(ev.dE, dir)) / std::max(1.0, std::abs(ddot(ev.dE, dir))));
      worst = std::max(worst, std::abs(fda - ev.dalpha) / std::max(1.0, std::abs(ev.dalpha)));
    }
  }
  verdict(worst <= 1e-6, "constitutive_gradients", fmt("max relative FD mismatch %.2e over 200 points (tol 1e-6)", worst));

  // Legendre pairing of the undamaged quadratic energy.
  double leg = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const SymTensor2 E = random_sym(2 + k % 2, rng, 2.0);
    const double Ge = m.G_e(1.0);
    const SymTensor2 CE = isotropic_C_apply(E, m.K_e, Ge);
    const double lhs = stored_energy(E, 1.0, m).value + conj_stored_energy_iso(CE, m.K_e, Ge);
    leg = std::max(leg, std::abs(lhs - ddot(CE, E)) / std::max(1.0, std::abs(ddot(CE, E))));
  }
  verdict(leg <= 1e-10, "constitutive_legendre", fmt("max relative defect %.2e (tol 1e-10)", leg));

  // Midpoint semi-convexity of the regularized energy plus (K/2) alpha^2 on the unit strain ball.
  const double K = semiconvexity_constant(m, 2);
  auto g = [&](const SymTensor2& E, double a) { return stored_energy_reg(E, a, m.eps_reg, m).value + 0.5 * K * a * a; };
  int bad = 0;
  double worst_gap = 0.0;
  for (int k = 0; k < 1000; ++k) {
    auto ball = [&] {
      SymTensor2 E = random_sym(2, rng, 1.0);
      const double n = norm(E);
      return n > 1.0 ? (1.0 / n) * E : E;
    };
    const SymTensor2 E0 = ball(), E1 = ball();
    const double a0 = unit(rng), a1 = unit(rng);
    const double mid = g(0.5 * (E0 + E1), 0.5 * (a0 + a1));
    const double avg = 0.5 * (g(E0, a0) + g(E1, a1));
    worst_gap = std::max(worst_gap, mid - avg);
    if (mid > avg + 1e-14 * std::max(1.0, std::abs(avg))) ++bad;
  }
  verdict(bad == 0, "constitutive_semiconvexity",
          fmt("%.0f of 1000 segments violate the midpoint test, max excess %.2e", bad, worst_gap));

  // Damage dissipation rate is nonnegative for every subgradient, including the kink at zero rate.
  int neg = 0;
  std::uniform_real_distribution<double> ur(-5.0, 5.0), uw(0.0, 2.0);
  for (int k = 0; k < 100000; ++k) {
    const double rate = k % 10 == 0 ? 0.0 : ur(rng);
    const auto [lo, hi] = zeta_subgradient_interval(unit(rng), uw(rng), rate, m);
    if (lo * rate < 0.0 || hi * rate < 0.0) ++neg;
  }
  verdict(neg == 0, "constitutive_damage_dissipation", fmt("%.0f negative values at 1e5 rates", neg));
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : "acceptance_out";
  std::filesystem::create_directories(root);

  // Energy audit and bound preservation on every shipped scenario.
  std::vector<ScenarioRun> runs;
  for (const auto& name : list_scenarios()) runs.push_back(timed_run(name, root / name));
  for (const auto& s : runs) {
    const RunResult& r = s.result;
    std::string detail = fmt("%.0f steps in %.1f s, worst slack/tol %.3g", r.rows.back().step, s.seconds,
                             r.worst_slack_ratio);
    if (r.conserving_checked) detail += fmt(", max relative drift %.2e", r.max_relative_drift);
    if (!r.completed) detail += ", error: " + r.error;
    verdict(r.completed && r.mech_pass && r.closure_pass && r.conserving_pass && s.seconds < 300.0,
            "energy_audit[" + s.name + "]", detail);
  }
  for (const auto& s : runs) {
    double min_a = 1, max_a = 0, min_c = 1, max_c = 0, min_t = 1e300;
    for (const auto& row : s.result.rows) {
      min_a = std::min(min_a, row.min_alpha);
      max_a = std::max(max_a, row.max_alpha);
      min_c = std::min(min_c, row.min_chi);
      max_c = std::max(max_c, row.max_chi);
      min_t = std::min(min_t, row.min_theta);
    }
    const bool ok = s.result.completed && min_a >= 0.0 && max_a <= 1.0 && min_c >= 0.0 && max_c <= 1.0 && min_t >= 0.0;
    verdict(ok, "bounds[" + s.name + "]",
            fmt("alpha in [%.6g, %.6g], ", min_a, max_a) + fmt("chi in [%.6g, %.6g], ", min_c, max_c) +
                fmt("min theta %.6g", min_t));
  }

  // Objective-rate structure under rigid rotation at three time steps.
  {
    const double taus[3] = {0.002, 0.001, 0.0005};
    double sph[3], devd[3], worst_struct = 0.0;
    bool done = true;
    for (int k = 0; k < 3; ++k) {
      RunOptions opt;
      opt.steps = 1000;
      opt.tau = taus[k];
      const RunResult r = run(load_scenario("rotor2d"), opt);
      done = done && r.completed;
      const auto& d = r.diagnostics["rotor"];
      sph[k] = d["max_sph_strain_drift"].get<double>();
      devd[k] = d["max_dev_strain_drift"].get<double>();
      worst_struct = std::max({worst_struct, d["max_skew_strain"].get<double>(), d["max_trace_creep"].get<double>(),
                               d["max_trace_inelastic"].get<double>()});
    }
    double order = 1e300;
    for (int k = 0; k < 2; ++k) {
      order = std::min(order, std::log2(sph[k] / sph[k + 1]));
      order = std::min(order, std::log2(devd[k] / devd[k + 1]));
    }
    verdict(done && worst_struct <= 1e-12, "objectivity_structure",
            fmt("max of skew E, tr Pi, tr P over 3 x 1000 steps: %.2e (tol 1e-12)", worst_struct));
    verdict(done && order >= 1.0, "objectivity_invariant_drift",
            fmt("sph drift %.3g -> %.3g, ", sph[0], sph[2]) + fmt("dev drift %.3g -> %.3g, ", devd[0], devd[2]) +
                fmt("min observed order %.3f (need >= 1)", order));
  }

  // Dispersion table of the shipped pwave1d run.
  {
    const auto& run_pw = *std::find_if(runs.begin(), runs.end(), [](const ScenarioRun& s) { return s.name == "pwave1d"; });
    const auto& table = run_pw.result.diagnostics["dispersion"];
    bool ok = table.size() == 3;
    double worst = 0.0, last = -1.0;
    std::string detail;
    for (const auto& e : table) {
      const double v = e["measured"].get<double>();
      ok = ok && !e["inconclusive"].get<bool>() && !e["predicted"].is_null() && v > last;
      if (!e["predicted"].is_null()) worst = std::max(worst, e["relative_error"].get<double>());
      last = v;
      detail += fmt("%.0fh: %.4f vs %.4f; ", e["wavelength_cells"].get<int>(), v,
                    e["predicted"].is_null() ? 0.0 : e["predicted"].get<double>());
    }
    ok = ok && worst < 0.05;
    verdict(ok, "pwave_dispersion", detail + fmt("max relative error %.3f (tol 0.05), increasing in wavelength", worst));
  }

  // Classical Stefan limit at three decreasing relaxation times.
  {
    const double omegas[3] = {5e-5, 2e-5, 1e-5};
    double err[3];
    bool done = true;
    for (int k = 0; k < 3; ++k) {
      RunConfig cfg = load_scenario("stefan1d");
      cfg.problem.mat.omega = omegas[k];
      const RunResult r = run(cfg);
      done = done && r.completed;
      err[k] = r.diagnostics["stefan"]["max_relative_front_error"].get<double>();
    }
    const bool n400 = load_scenario("stefan1d").problem.grid.nx() == 400;
    const bool ok = done && n400 && err[2] < 0.03 && err[0] < 0.03 && err[1] < err[0] && err[2] < err[1];
    verdict(ok, "stefan_front", fmt("front errors %.4f, %.4f, %.4f", err[0], err[1], err[2]) +
                                    " for omega 5e-5, 2e-5, 1e-5 (N = 400, t > 10 tau, tol 0.03, decreasing)");
  }

  constitutive_checks();

  // Determinism: a second serial run of every scenario reproduces energy.csv byte for byte.
  {
    std::string detail;
    bool ok = true;
    for (const auto& s : runs) {
      timed_run(s.name, root / (s.name + "_rerun"));
      const std::string a = slurp(root / s.name / "energy.csv");
      const std::string b = slurp(root / (s.name + "_rerun") / "energy.csv");
      const bool same = !a.empty() && a == b;
      ok = ok && same;
      detail += s.name + (same ? " identical; " : " DIFFERS; ");
    }
    verdict(ok, "determinism", detail);
  }

  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
