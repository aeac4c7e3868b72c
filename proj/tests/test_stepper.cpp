#include <cmath>

#include "doctest.h"
#include "thermo/stepper.hpp"

using namespace thermo;

namespace {

Problem periodic_problem(int d, int n, MechanicsMode mode) {
  Problem p;
  p.grid = Grid(d, {n, d == 2 ? n : 1}, {1.0, 1.0});
  p.mode = mode;
  p.mat.kappa = 1e-3;
  p.mat.G_d = 1e-3;
  p.mat.eps_zeta = 1.0;
  p.mat.theta_pt = 1.0;
  p.validate();
  return p;
}

Problem wall_problem(int d, int n, MechanicsMode mode) {
  Problem p = periodic_problem(d, n, mode);
  p.bc.axis = {AxisBC::wall, AxisBC::wall};
  p.validate();
  return p;
}

template <class F>
void cells(const Grid& g, F&& f) {
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) f(i, j);
}

double max_abs_diff(const ScalarField& a, const ScalarField& b, const Grid& g) {
  double m = 0.0;
  cells(g, [&](int i, int j) { m = std::max(m, std::abs(a(i, j) - b(i, j))); });
  return m;
}

}  // namespace

TEST_CASE("rest state is a fixed point") {
  for (auto mode : {MechanicsMode::dynamic, MechanicsMode::frozen}) {
    Problem p = wall_problem(2, 8, mode);
    const State s0 = State::rest(p, 0.8);
    const StepResult r = step(s0, 0.01, p);
    CHECK(r.report.converged);
    const Grid& g = p.grid;
    CHECK(max_abs_diff(r.state.theta, s0.theta, g) <= 1e-12);
    CHECK(max_abs_diff(r.state.alpha, s0.alpha, g) <= 1e-12);
    CHECK(max_abs_diff(r.state.chi, s0.chi, g) <= 1e-12);
    double vmax = 0.0;
    cells(g, [&](int i, int j) { vmax = std::max(vmax, std::abs(r.state.v(i, j)[0]) + std::abs(r.state.v(i, j)[1])); });
    CHECK(vmax <= 1e-12);
    CHECK(r.report.channels.work_heat == 0.0);
  }
}

TEST_CASE("tau above the admissible bound is rejected") {
  Problem p = periodic_problem(2, 8, MechanicsMode::dynamic);
  const State s0 = State::rest(p, 0.5);
  const double tmax = tau_max(s0, p);
  CHECK(tmax > 0.0);
  CHECK_THROWS_AS(step(s0, 2.0 * tmax, p), std::invalid_argument);
  CHECK_THROWS_AS(step(s0, 0.0, p), std::invalid_argument);
}

TEST_CASE("advance halves an oversized step into admissible sub-steps") {
  Problem p = periodic_problem(2, 4, MechanicsMode::frozen);
  const State s0 = State::rest(p, 0.5);
  const double tmax = tau_max(s0, p);
  const AdvanceResult r = advance(s0, 3.0 * tmax, p);
  CHECK(r.reports.size() >= 4);
  for (const auto& rep : r.reports) CHECK(rep.tau <= tmax * (1 + 1e-12));
  CHECK(r.state.time == doctest::Approx(3.0 * tmax).epsilon(1e-12));
}

TEST_CASE("heated 1D bar warms then melts near the transition temperature") {
  Problem p = wall_problem(1, 20, MechanicsMode::frozen);
  p.mat.omega = 1e-3;
  p.bc.heat[0] = FaceFlux{1.0, 0.0};
  p.validate();
  State s = State::rest(p, 0.9);
  const Grid& g = p.grid;
  double mean_prev = 0.9;
  bool melted = false;
  for (int k = 0; k < 60; ++k) {
    s = step(s, 0.01, p).state;
    double mean = 0.0, chi_sum = 0.0;
    cells(g, [&](int i, int j) {
      mean += s.theta(i, j) / g.cells();
      chi_sum += s.chi(i, j);
    });
    if (chi_sum == 0.0) CHECK(mean > mean_prev);
    if (chi_sum > 0.0) {
      melted = true;
      cells(g, [&](int i, int j) {
        if (s.chi(i, j) > 0.0 && s.chi(i, j) < 1.0) CHECK(std::abs(s.theta(i, j) - 1.0) <= 0.05);
      });
    }
    mean_prev = mean;
  }
  CHECK(melted);
  CHECK(s.chi(0) > s.chi(g.nx() - 1));
}

TEST_CASE("momentum residual of a uniform velocity is the inertial term") {
  Problem p = periodic_problem(2, 8, MechanicsMode::dynamic);
  const State prev = State::rest(p, 1.0);
  State cur = prev;
  cells(p.grid, [&](int i, int j) { cur.v(i, j) = {1.0, 2.0, 0.0}; });
  const VecField R = momentum_residual(cur, prev, 0.1, p);
  cells(p.grid, [&](int i, int j) {
    CHECK(R(i, j)[0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(R(i, j)[1] == doctest::Approx(20.0).epsilon(1e-12));
  });
  const VecField R0 = momentum_residual(prev, prev, 0.1, p);
  cells(p.grid, [&](int i, int j) { CHECK(std::abs(R0(i, j)[0]) + std::abs(R0(i, j)[1]) == 0.0); });
}

TEST_CASE("constant body force work enters the ledger") {
  Problem p = periodic_problem(2, 4, MechanicsMode::dynamic);
  p.force = VecField(p.grid, Vec{0.5, 0.0, 0.0});
  const State s0 = State::rest(p, 0.5);
  const double tau = 0.01;
  const StepResult r = step(s0, tau, p);
  // Uniform force accelerates uniformly: v = tau f / rho.
  cells(p.grid, [&](int i, int j) { CHECK(r.state.v(i, j)[0] == doctest::Approx(0.005).epsilon(1e-9)); });
  CHECK(r.report.channels.work_force == doctest::Approx(tau * 0.5 * 0.005).epsilon(1e-9));
}

TEST_CASE("strain is frozen without motion or creep") {
  Problem p = periodic_problem(2, 6, MechanicsMode::frozen);
  State prev = State::rest(p, 0.5);
  cells(p.grid, [&](int i, int j) {
    prev.E(i, j)(0, 0) = 0.01 * i;
    prev.E(i, j)(0, 1) = -0.02 * j;
  });
  const SymField E = strain_update(prev, prev, 0.01, p);
  cells(p.grid, [&](int i, int j) { CHECK(norm(E(i, j) - prev.E(i, j)) <= 1e-14); });
}

TEST_CASE("rigid rotation preserves strain invariants to first order in tau") {
  auto drift = [](double tau) {
    Problem p = wall_problem(2, 16, MechanicsMode::rigid_rotation);
    p.grid = Grid(2, {16, 16}, {2.0, 2.0});
    p.rotation_rate = 1.0;
    p.rotation_center = {1.0, 1.0};
    p.validate();
    State s = State::rest(p, 0.5);
    s.v = rigid_velocity(p);
    // Uniform strain: spatially constant, so transport only rotates it.
    cells(p.grid, [&](int i, int j) {
      s.E(i, j)(0, 0) = 1e-3;
      s.E(i, j)(1, 1) = -5e-4;
      s.E(i, j)(0, 1) = 2e-4;
    });
    const double dev0 = norm(dev(s.E(8, 8))), sph0 = norm(sph(s.E(8, 8)));
    const int n = static_cast<int>(std::round(0.5 / tau));
    for (int k = 0; k < n; ++k) s.E = strain_update(s, s, tau, p);
    return std::abs(norm(dev(s.E(8, 8))) - dev0) + std::abs(norm(sph(s.E(8, 8))) - sph0);
  };
  const double d1 = drift(0.02), d2 = drift(0.01);
  CHECK(d2 < d1);
  CHECK(std::log2(d1 / d2) >= 0.9);
}

TEST_CASE("creep solve examples") {
  Problem p = periodic_problem(2, 6, MechanicsMode::frozen);
  p.mat.G_m_curve = Curve::constant(4.0);
  p.mat.varkappa = 0.3;
  const Grid& g = p.grid;
  const ScalarField w(g, 0.0);

  SUBCASE("zero deviatoric stress gives zero rate") {
    SymField S(g, SymTensor2::identity(2));
    const SymField Pi = creep_solve(S, w, p);
    cells(g, [&](int i, int j) { CHECK(norm(Pi(i, j)) == 0.0); });
  }
  SUBCASE("uniform deviatoric stress gives dev S over G_m") {
    SymTensor2 s(2);
    s(0, 0) = 3.0;
    s(1, 1) = 1.0;
    s(0, 1) = 0.5;
    SymField S(g, s);
    const SymField Pi = creep_solve(S, w, p);
    cells(g, [&](int i, int j) {
      CHECK(norm(Pi(i, j) - 0.25 * dev(s)) <= 1e-10);
      CHECK(std::abs(trace(Pi(i, j))) <= 1e-14);
    });
  }
  SUBCASE("Glen law inverts the power law pointwise") {
    p.mat.varkappa = 0.0;
    p.mat.glen = GlenLaw{true, 2.0, 4.0 / 3.0};
    SymTensor2 s(2);
    s(0, 1) = 1.0;
    SymField S1(g, s), S2(g, 2.0 * s);
    const double a = norm(creep_solve(S1, w, p)(0, 0));
    const double b = norm(creep_solve(S2, w, p)(0, 0));
    CHECK(b / a == doctest::Approx(8.0).epsilon(1e-10));
  }
}

TEST_CASE("damage solve examples") {
  Problem p = periodic_problem(2, 4, MechanicsMode::frozen);
  const double tau = 0.01;

  SUBCASE("undamaged unstrained state is stationary") {
    const State s = State::rest(p, 0.5);
    const ScalarField a = damage_solve(s, s, tau, p);
    cells(p.grid, [&](int i, int j) { CHECK(a(i, j) == doctest::Approx(1.0).epsilon(1e-14)); });
  }
  SUBCASE("damaged unstrained cell heals when the healing coefficient vanishes") {
    p.mat.G_d = 1.0;
    p.mat.kappa = 1.0;
    p.mat.sigma_f = 0.1;
    State s = State::rest(p, 0.5);
    cells(p.grid, [&](int i, int j) { s.alpha(i, j) = 0.5; });
    const ScalarField a = damage_solve(s, s, tau, p);
    cells(p.grid, [&](int i, int j) {
      CHECK(a(i, j) > 0.5);
      CHECK(a(i, j) <= 1.0);
    });
  }
  SUBCASE("large deviatoric strain damages at a rate limited by the threshold") {
    p.mat.sigma_f = 1e-3;
    p.mat.G_e0 = 10.0;
    p.mat.eps_reg = 1e-3;
    State s = State::rest(p, 0.5);
    SymTensor2 e(2);
    e(0, 1) = 1.0;
    cells(p.grid, [&](int i, int j) { s.E(i, j) = e; });
    const ScalarField a = damage_solve(s, s, tau, p);
    cells(p.grid, [&](int i, int j) { CHECK(a(i, j) < 1.0); });
    // Rate in the opening branch is bounded by the driving force over the coercive modulus.
    const double x = norm2(dev(e));
    const double drive = 2.0 * p.mat.G_e0 * x / std::sqrt(1 + p.mat.eps_reg * x);
    CHECK((1.0 - a(0, 0)) / tau <= (drive - p.mat.sigma_f) / (2 * p.mat.eps_zeta) + 1e-12);
  }
}

TEST_CASE("heat solve leaves a uniform insulated state unchanged") {
  Problem p = wall_problem(2, 6, MechanicsMode::frozen);
  const State prev = State::rest(p, 0.7);
  State cur = prev;
  const HeatSources src{ScalarField(p.grid, 0.0), ScalarField(p.grid, 0.0)};
  heat_solve(cur, prev, 0.01, src, p);
  CHECK(max_abs_diff(cur.theta, prev.theta, p.grid) <= 1e-14);
}

TEST_CASE("conduction mode decays by the discrete symbol") {
  Problem p = periodic_problem(1, 32, MechanicsMode::frozen);
  p.mat.conductivity_curve = Curve::constant(0.7);
  p.mat.c_curve = StepCurve::constant(2.0);
  p.mat.theta_pt = 10.0;
  p.validate();
  const Grid& g = p.grid;
  const double k = 2.0 * M_PI * 3.0;
  State prev = State::rest(p, 1.0);
  cells(g, [&](int i, int j) { prev.theta(i, j) = 1.0 + 1e-3 * std::cos(k * g.center(0, i)); });
  State cur = prev;
  const double tau = 1e-3;
  const HeatSources src{ScalarField(g, 0.0), ScalarField(g, 0.0)};
  heat_solve(cur, prev, tau, src, p);
  const double h = g.h[0];
  const double symbol = 2.0 * (1.0 - std::cos(k * h)) / (h * h);
  const double factor = 1.0 / (1.0 + tau * 0.7 * symbol / 2.0);
  cells(g, [&](int i, int j) {
    const double expect = 1.0 + 1e-3 * factor * std::cos(k * g.center(0, i));
    CHECK(cur.theta(i, j) == doctest::Approx(expect).epsilon(1e-12));
  });
}

TEST_CASE("phase fraction examples") {
  Problem p = periodic_problem(1, 4, MechanicsMode::frozen);
  p.mat.omega = 0.5;
  const double tau = 0.01;
  State s = State::rest(p, 1.0);
  SUBCASE("at the transition temperature nothing changes") {
    cells(p.grid, [&](int i, int j) { s.chi(i, j) = 0.3; });
    const ScalarField c = chi_solve(s, s, tau, p);
    cells(p.grid, [&](int i, int j) { CHECK(c(i, j) == 0.3); });
  }
  SUBCASE("liquid above the transition stays liquid") {
    cells(p.grid, [&](int i, int j) {
      s.chi(i, j) = 1.0;
      s.theta(i, j) = 1.2;
    });
    const ScalarField c = chi_solve(s, s, tau, p);
    cells(p.grid, [&](int i, int j) { CHECK(c(i, j) == 1.0); });
  }
  SUBCASE("undercooled mixture freezes by the relaxation increment") {
    cells(p.grid, [&](int i, int j) {
      s.chi(i, j) = 0.5;
      s.theta(i, j) = 0.9;
    });
    const ScalarField c = chi_solve(s, s, tau, p);
    const double drop = (tau / p.mat.omega) * std::abs(upsilon(-0.1, p.mat.x_cap));
    cells(p.grid, [&](int i, int j) { CHECK(c(i, j) == doctest::Approx(0.5 - drop).epsilon(1e-14)); });
  }
}

TEST_CASE("inelastic strain reconstruction examples") {
  Problem p = periodic_problem(2, 4, MechanicsMode::frozen);
  State prev = State::rest(p, 0.5);
  SymTensor2 p0(2);
  p0(0, 0) = 0.1;
  p0(1, 1) = -0.1;
  cells(p.grid, [&](int i, int j) { prev.P(i, j) = p0; });
  State cur = prev;
  SUBCASE("no creep and no motion freezes P") {
    const SymField P = reconstruct_P(cur, prev, 0.05, p);
    cells(p.grid, [&](int i, int j) { CHECK(norm(P(i, j) - p0) <= 1e-15); });
  }
  SUBCASE("uniform creep accumulates linearly") {
    SymTensor2 pi(2);
    pi(0, 1) = 0.3;
    cells(p.grid, [&](int i, int j) { cur.Pi(i, j) = pi; });
    const SymField P = reconstruct_P(cur, prev, 0.05, p);
    cells(p.grid, [&](int i, int j) { CHECK(norm(P(i, j) - (p0 + 0.05 * pi)) <= 1e-14); });
  }
}

TEST_CASE("stress bundle sums to the total stress") {
  Problem p = periodic_problem(2, 6, MechanicsMode::dynamic);
  State s = State::rest(p, 0.8);
  cells(p.grid, [&](int i, int j) {
    s.v(i, j) = {0.1 * std::sin(2 * M_PI * j / 6.0), 0.0, 0.0};
    s.E(i, j)(0, 1) = 0.01 * i;
    s.alpha(i, j) = 0.9 + 0.01 * j;
  });
  const StressBundle b = stress_bundle(s, p);
  cells(p.grid, [&](int i, int j) {
    CHECK(norm(b.T(i, j) - (b.Sigma(i, j) + b.K(i, j) + b.Dstress(i, j))) <= 1e-14);
    CHECK(b.S(i, j)(0, 1) == b.S(i, j)(1, 0));
  });
}

TEST_CASE("steps are bitwise deterministic") {
  Problem p = periodic_problem(2, 8, MechanicsMode::dynamic);
  p.mat.K_v = 0.01;
  p.mat.G_v = 0.01;
  State s = State::rest(p, 0.8);
  cells(p.grid, [&](int i, int j) { s.v(i, j) = {1e-3 * std::sin(2 * M_PI * (j + 0.5) / 8.0), 0.0, 0.0}; });
  const StepResult a = step(s, 0.01, p), b = step(s, 0.01, p);
  cells(p.grid, [&](int i, int j) {
    CHECK(a.state.v(i, j)[0] == b.state.v(i, j)[0]);
    CHECK(a.state.theta(i, j) == b.state.theta(i, j));
  });
  CHECK(a.report.channels.diss_stokes == b.report.channels.diss_stokes);
  CHECK(a.report.channels.diss_stokes > 0.0);
}
