#include <cmath>
#include <random>

#include "doctest.h"
#include "thermo/materials.hpp"

using namespace thermo;

namespace {

SymTensor2 random_sym(int d, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  SymTensor2 S(d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) S(i, j) = u(rng);
  return S;
}

// Rank-4 isotropic elasticity contracted index by index.
SymTensor2 brute_C(const SymTensor2& E, double K, double G) {
  const int d = E.d;
  auto delta = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  SymTensor2 out(d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
          const double c = K * delta(i, j) * delta(k, l) +
                           G * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k) -
                                (2.0 / d) * delta(i, j) * delta(k, l));
          s += c * E(k, l);
        }
      out(i, j) = s;
    }
  return out;
}

MaterialParams water_like() {
  MaterialParams m;
  m.K_e = 2.0;
  m.G_e0 = 1.3;
  m.eps_g = 0.05;
  m.G_d = 0.7;
  m.kappa = 0.9;
  return m;
}

// Central difference of the energy along a unit symmetric direction.
template <class F>
double central(F&& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("isotropic elasticity examples") {
  CHECK(norm(isotropic_C_apply(SymTensor2::identity(2), 2.0, 1.0) - 4.0 * SymTensor2::identity(2)) == 0.0);
  SymTensor2 E(2);
  E(0, 0) = 1;
  E(0, 1) = 2;
  E(1, 1) = 3;
  const SymTensor2 C = isotropic_C_apply(E, 1.0, 2.0);
  CHECK(C(0, 0) == doctest::Approx(0.0));
  CHECK(C(0, 1) == doctest::Approx(8.0));
  CHECK(C(1, 1) == doctest::Approx(8.0));
  CHECK(norm(C - brute_C(E, 1.0, 2.0)) < 1e-13);

  std::mt19937_64 rng(1);
  const SymTensor2 D = dev(random_sym(3, rng));
  CHECK(norm(isotropic_C_apply(D, 5.0, 0.75) - 1.5 * D) < 1e-14);
  for (int k = 0; k < 50; ++k) {
    const SymTensor2 R = random_sym(1 + k % 3, rng);
    CHECK(norm(isotropic_C_apply(R, 1.7, 0.4) - brute_C(R, 1.7, 0.4)) < 1e-13);
  }
}

TEST_CASE("isotropic viscosity examples") {
  CHECK(norm(isotropic_D_apply(SymTensor2(2), 3.0, 1.0)) == 0.0);
  CHECK(norm(isotropic_D_apply(SymTensor2::identity(2), 3.0, 1.0) - 6.0 * SymTensor2::identity(2)) == 0.0);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    const SymTensor2 R = random_sym(2, rng);
    CHECK(ddot(R, isotropic_D_apply(R, 0.3, 0.2)) > 0.0);
  }
}

TEST_CASE("stored energy special values") {
  const MaterialParams m = water_like();
  const EnergyValue a = stored_energy(SymTensor2(2), 1.0, m);
  CHECK(a.value == 0.0);
  CHECK(norm(a.dE) == 0.0);
  CHECK(a.dalpha == 0.0);
  const EnergyValue b = stored_energy(SymTensor2(2), 0.0, m);
  CHECK(b.value == doctest::Approx(m.G_d / (2.0 * m.kappa)));
  CHECK_THROWS_AS(stored_energy(SymTensor2(2), 1.2, m), std::domain_error);
  CHECK_THROWS_AS(stored_energy(SymTensor2(2), -0.1, m), std::domain_error);
}

TEST_CASE("stored energy gradients match central differences") {
  const MaterialParams m = water_like();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ua(0.05, 0.95);
  for (double eps : {0.0, 0.5, 3.0}) {
    for (int k = 0; k < 100; ++k) {
      const int d = 2 + k % 2;
      const SymTensor2 E = random_sym(d, rng);
      const double alpha = ua(rng);
      const SymTensor2 dir = random_sym(d, rng);
      const EnergyValue ev = stored_energy_reg(E, alpha, eps, m);
      const double h = 1e-5;
      const double fdE =
          central([&](double s) { return stored_energy_reg(E + s * dir, alpha, eps, m).value; }, h);
      const double anE = ddot(ev.dE, dir);
      CHECK(std::abs(fdE - anE) <= 1e-6 * std::max(1.0, std::abs(anE)));
      const double fda =
          central([&](double s) { return stored_energy_reg(E, alpha + s, eps, m).value; }, h);
      CHECK(std::abs(fda - ev.dalpha) <= 1e-6 * std::max(1.0, std::abs(ev.dalpha)));
    }
  }
}

TEST_CASE("regularized energy reduces to the plain one and decreases in eps") {
  const MaterialParams m = water_like();
  std::mt19937_64 rng(22);
  for (int k = 0; k < 50; ++k) {
    const SymTensor2 E = random_sym(2, rng, 2.0);
    const double alpha = 0.37;
    CHECK(stored_energy_reg(E, alpha, 0.0, m).value == stored_energy(E, alpha, m).value);
    double prev = stored_energy_reg(E, alpha, 0.0, m).value;
    for (double eps : {0.01, 0.1, 1.0, 10.0}) {
      const double cur = stored_energy_reg(E, alpha, eps, m).value;
      CHECK(cur <= prev);
      prev = cur;
    }
  }
}

TEST_CASE("semi-convexity midpoint test on the unit strain ball") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ua(0.0, 1.0);
  for (double eps : {0.1, 1.0, 10.0}) {
    MaterialParams m = water_like();
    m.eps_reg = eps;
    const double K = semiconvexity_constant(m, 2);
    auto g = [&](const SymTensor2& E, double a) {
      return stored_energy_reg(E, a, eps, m).value + 0.5 * K * a * a;
    };
    auto in_ball = [&](std::mt19937_64& r) {
      SymTensor2 E = random_sym(2, r);
      const double n = norm(E);
      return n > 1.0 ? (1.0 / n) * E : E;
    };
    for (int k = 0; k < 1000; ++k) {
      const SymTensor2 E0 = in_ball(rng), E1 = in_ball(rng);
      const double a0 = ua(rng), a1 = ua(rng);
      const double mid = g(0.5 * (E0 + E1), 0.5 * (a0 + a1));
      const double avg = 0.5 * (g(E0, a0) + g(E1, a1));
      CHECK(mid <= avg + 1e-14 * std::max(1.0, std::abs(avg)));
    }
  }
  CHECK(semiconvexity_constant(MaterialParams{}, 1) == 0.0);
}

TEST_CASE("conjugate energy and the Legendre pairing") {
  SymTensor2 S = 2.0 * SymTensor2::identity(2);
  CHECK(conj_stored_energy_iso(S, 1.0, 1.0) == doctest::Approx(2.0));
  const double s = 1.7;
  CHECK(conj_stored_energy_iso(s * SymTensor2::identity(3), 2.5, 1.0) == doctest::Approx(s * s / (2 * 2.5)));
  SymTensor2 sh(2);
  sh(0, 1) = 1.0;
  CHECK_THROWS_AS(conj_stored_energy_iso(sh, 1.0, 0.0), std::domain_error);

  MaterialParams m = water_like();
  m.eps_g = 0.0;
  std::mt19937_64 rng(24);
  for (int k = 0; k < 200; ++k) {
    const SymTensor2 E = random_sym(2 + k % 2, rng);
    const SymTensor2 CE = isotropic_C_apply(E, m.K_e, m.G_e(1.0));
    const double lhs = stored_energy(E, 1.0, m).value + conj_stored_energy_iso(CE, m.K_e, m.G_e(1.0));
    const double rhs = ddot(CE, E);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("heat maps with constant capacity") {
  MaterialParams m;
  m.theta_pt = 1.5;
  m.c_curve = StepCurve::constant(1.0);
  CHECK(gamma_tilde(2.0, m) == doctest::Approx(2.0));
  const double c0 = 2.5;
  m.c_curve = StepCurve::constant(c0);
  for (double th : {0.1, 0.7, 1.5, 3.0}) {
    const double exact = -c0 * th * std::log(th / m.theta_pt);
    CHECK(phi_tilde(th, m) == doctest::Approx(exact).epsilon(1e-12));
  }
  CHECK_THROWS_AS(heat_maps(-1.0, m), std::domain_error);
}

TEST_CASE("heat capacity identity on a piecewise capacity") {
  MaterialParams m;
  m.theta_pt = 1.0;
  m.c_curve = StepCurve({{0.0, 1.0}, {0.8, 3.0}, {1.6, 2.0}});
  for (double th : {0.3, 0.6, 1.1, 1.4, 2.0, 3.5}) {
    const double h = 1e-4;
    const double second = (phi_tilde(th + h, m) - 2.0 * phi_tilde(th, m) + phi_tilde(th - h, m)) / (h * h);
    CHECK(-th * second == doctest::Approx(m.c_curve(th)).epsilon(1e-5));
    // gamma = phi - theta phi'
    const double first = (phi_tilde(th + h, m) - phi_tilde(th - h, m)) / (2 * h);
    CHECK(phi_tilde(th, m) - th * first == doctest::Approx(gamma_tilde(th, m)).epsilon(1e-7));
  }
  CHECK(phi_tilde(m.theta_pt, m) == doctest::Approx(0.0));
}

TEST_CASE("enthalpy maps and their inverses") {
  MaterialParams m;
  m.theta_pt = 273.0;
  m.latent_l = 10.0;
  CHECK(enthalpy_of(273.0, 0.5, m) == doctest::Approx(278.0));
  CHECK(enthalpy_of(100.0, 0.0, m) == doctest::Approx(gamma_tilde(100.0, m)));
  m.c_curve = StepCurve({{0.0, 1.0}, {100.0, 4.0}, {400.0, 2.0}});
  for (int k = 0; k <= 100; ++k) {
    const double th = 6.0 * k;
    CHECK(theta_of(gamma_tilde(th, m), m) == doctest::Approx(th).epsilon(1e-12));
  }
  bool clamped = false;
  CHECK(theta_of(-1.0, m, &clamped) == 0.0);
  CHECK(clamped);
}

TEST_CASE("Stefan graph inverse") {
  MaterialParams m;
  m.theta_pt = 273.0;
  m.latent_l = 334.0;
  CHECK(beta_of_w(100.0, m) == doctest::Approx(100.0));
  CHECK(beta_of_w(440.0, m) == doctest::Approx(273.0));
  CHECK(beta_of_w(634.0, m) == doctest::Approx(300.0));
  CHECK(beta_of_w(273.0, m) == 273.0);
  CHECK(beta_of_w(607.0, m) == 273.0);
  double prev = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double b = beta_of_w(0.5 * k, m);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("damage dissipation potential") {
  MaterialParams m;
  m.sigma_f = 2.0;
  m.eps_zeta = 0.1;
  CHECK(zeta_damage(1.0, 0.0, 0.0, m) == 0.0);
  auto iv = zeta_subgradient_interval(1.0, 0.0, 0.0, m);
  CHECK(iv.first == -2.0);
  CHECK(iv.second == 0.0);
  CHECK(zeta_damage(1.0, 0.0, -1.0, m) == doctest::Approx(2.1));

  m.A_curve = Curve({{0.0, 3.0}, {1.0, 0.0}});
  std::mt19937_64 rng(25);
  std::normal_distribution<double> nr(0.0, 2.0);
  std::uniform_real_distribution<double> uw(-0.5, 1.5), us(0.0, 1.0);
  for (int k = 0; k < 100000; ++k) {
    const double rate = (k % 10 == 0) ? 0.0 : nr(rng);
    const double w = uw(rng);
    auto [lo, hi] = zeta_subgradient_interval(1.0, w, rate, m);
    const double sel = lo + us(rng) * (hi - lo);
    REQUIRE(sel * rate >= 0.0);
    REQUIRE(zeta_damage(1.0, w, rate, m) >= m.eps_zeta * rate * rate);
  }
}

TEST_CASE("phase relaxation map") {
  CHECK(upsilon(0.0, 1.0) == 0.0);
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int k = 0; k < 1000; ++k) {
    const double a = u(rng), b = u(rng);
    CHECK(upsilon(-a, 1.0) == -upsilon(a, 1.0));
    if (a < b) CHECK(upsilon(a, 1.0) < upsilon(b, 1.0));
    if (a > b) CHECK(upsilon(a, 1.0) > upsilon(b, 1.0));
  }
}

TEST_CASE("P-wave dispersion closed form") {
  MaterialParams m;
  m.K_e = 4.0;
  m.rho = 1.0;
  m.K_v = 0.0;
  CHECK(*dispersion_velocity(0.3, m) == doctest::Approx(2.0));
  m.K_v = 2.0;
  CHECK(*dispersion_velocity(1.0, m) == doctest::Approx(std::sqrt(3.0)));
  const double lcrit = m.K_v / (2.0 * std::sqrt(m.rho * m.K_e));
  CHECK_FALSE(dispersion_velocity(lcrit, m).has_value());
  CHECK_FALSE(dispersion_velocity(0.5 * lcrit, m).has_value());
  double prev = 0.0;
  for (double lam = 1.01 * lcrit; lam < 100.0; lam *= 1.3) {
    const double v = *dispersion_velocity(lam, m);
    CHECK(v > prev);
    CHECK(v < 2.0);
    prev = v;
  }
}

TEST_CASE("Glen creep potential") {
  CHECK(glen_creep_potential(DevTensor2(2), 1.0, 4.0 / 3.0).value == 0.0);
  std::mt19937_64 rng(27);
  const DevTensor2 r(random_sym(2, rng));
  const CreepPotential q2 = glen_creep_potential(r, 0.5, 2.0);
  CHECK(q2.value == doctest::Approx(0.5 * norm2(r.sym())));
  CHECK(norm(q2.grad - 1.0 * r.sym()) < 1e-14);
  const double q = 4.0 / 3.0;
  const CreepPotential cp = glen_creep_potential(r, 1.2, q);
  const DevTensor2 dir(random_sym(2, rng));
  const double h = 1e-6;
  const double fd = (glen_creep_potential(DevTensor2(r.sym() + h * dir.sym()), 1.2, q).value -
                     glen_creep_potential(DevTensor2(r.sym() - h * dir.sym()), 1.2, q).value) /
                    (2 * h);
  CHECK(fd == doctest::Approx(ddot(cp.grad, dir.sym())).epsilon(1e-6));
  CHECK_THROWS_AS(glen_creep_potential(r, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("parameter validation") {
  MaterialParams m;
  m.nu = 1.0;
  CHECK_NOTHROW(m.validate(2));
  MaterialParams bad = m;
  bad.p_exp = 2.0;
  CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
  bad = m;
  bad.G_m_curve = Curve({{0.0, 1.0}, {1.0, 0.0}});
  CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
  bad = m;
  bad.A_curve = Curve({{0.0, 0.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
  bad = m;
  bad.c_curve = StepCurve({{0.0, 1.0}, {1.0, 0.0}});
  CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
  CHECK_THROWS_AS(Curve({{1.0, 0.0}, {0.5, 1.0}}), std::invalid_argument);
  CHECK(m.G_m_curve(1e9) >= m.G_m_curve.min_value());
}
