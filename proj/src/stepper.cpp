#include "thermo/stepper.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace thermo {

namespace {

constexpr double kTiny = 1e-300;

template <class F>
void for_cells(const Grid& g, F&& f) {
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) f(i, j);
}

double vdot(const Vec& a, const Vec& b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

SymTensor2 zero_sym(int d) { return SymTensor2(d); }

Grad3 zero_grad3(int d) {
  Grad3 z{};
  for (auto& c : z) c = SymTensor2(d);
  return z;
}

double grad3_norm2(const Grad3& G, int d) {
  double s = 0.0;
  for (int c = 0; c < d; ++c) s += norm2(G[c]);
  return s;
}

// Cell neighbour along axis in direction dir; false across a wall.
bool neighbour(const Grid& g, const BoundarySpec& bc, int axis, int dir, int i, int j, int& ni,
               int& nj) {
  ni = i;
  nj = j;
  const int n = axis == 0 ? g.nx() : g.ny();
  int& k = axis == 0 ? ni : nj;
  k += dir;
  if (k >= 0 && k < n) return true;
  if (bc.axis[axis] == AxisBC::wall) return false;
  k = (k + n) % n;
  return true;
}

// Small dense solve, partial pivoting; A is n x n row-major.
void dense_solve(std::array<double, 36>& A, std::array<double, 6>& b, int n) {
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(A[r * n + c]) > std::abs(A[piv * n + c])) piv = r;
    if (piv != c) {
      for (int k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (int r = c + 1; r < n; ++r) {
      const double f = A[r * n + c] / A[c * n + c];
      for (int k = c; k < n; ++k) A[r * n + k] -= f * A[c * n + k];
      b[r] -= f * b[c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= A[r * n + k] * b[k];
    b[r] = s / A[r * n + r];
  }
}

// Conjugate gradients on a symmetric positive operator; returns iterations used.
int conjugate_gradient(const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply,
                       const std::vector<double>& rhs, std::vector<double>& x, double rel_tol,
                       int max_iter, const std::vector<double>* diag = nullptr) {
  const std::size_t n = rhs.size();
  std::vector<double> r(n), z(n), pdir(n), Ap(n);
  apply(x, Ap);
  for (std::size_t k = 0; k < n; ++k) r[k] = rhs[k] - Ap[k];
  auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t k = 0; k < n; ++k) out[k] = diag ? in[k] / (*diag)[k] : in[k];
  };
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
  };
  const double bnorm = std::sqrt(dot(rhs, rhs));
  if (bnorm == 0.0 && std::sqrt(dot(r, r)) == 0.0) return 0;
  const double target = rel_tol * std::max(bnorm, kTiny);
  precond(r, z);
  pdir = z;
  double rz = dot(r, z);
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(dot(r, r)) <= target) return it;
    apply(pdir, Ap);
    const double pAp = dot(pdir, Ap);
    if (!(pAp > 0.0)) return it;
    const double a = rz / pAp;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += a * pdir[k];
      r[k] -= a * Ap[k];
    }
    precond(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t k = 0; k < n; ++k) pdir[k] = z[k] + beta * pdir[k];
  }
  return max_iter;
}

struct Kinematics {
  SymField Eh;       // strain rate, mirror ghosts
  Grad3Field G;      // derivatives of Eh, ghosts filled
  ScalarField Gn2;   // |G|^2
  ScalarField divv;  // discrete divergence
};

Kinematics kinematics(const VecField& v, const Problem& p) {
  const Grid& g = p.grid;
  Kinematics k;
  k.Eh = strain_rate(v, g);
  fill_ghosts(k.Eh, g, p.bc, Parity::mirror);
  k.G = gradient(k.Eh, g);
  fill_ghosts(k.G, g, p.bc);
  k.Gn2 = ScalarField(g, 0.0);
  for_cells(g, [&](int i, int j) { k.Gn2(i, j) = grad3_norm2(k.G(i, j), g.d); });
  k.divv = divergence(v, g);
  return k;
}

double hyper_coefficient(double Gn2, const MaterialParams& m) {
  if (Gn2 == 0.0) return 0.0;
  return m.nu * std::pow(Gn2, 0.5 * (m.p_exp - 2.0));
}

// Hyperstress divergence part: -sum_c d_c (mu G_c), mirror ghosts.
SymField hyper_stress(const Kinematics& k, const Problem& p) {
  const Grid& g = p.grid;
  Grad3Field H(g, zero_grad3(g.d));
  for_cells(g, [&](int i, int j) {
    const double mu = hyper_coefficient(k.Gn2(i, j), p.mat);
    for (int c = 0; c < g.d; ++c) H(i, j)[c] = mu * k.G(i, j)[c];
  });
  fill_ghosts(H, g, p.bc);
  SymField T = divergence(H, g);
  for_cells(g, [&](int i, int j) { T(i, j) = -1.0 * T(i, j); });
  fill_ghosts(T, g, p.bc, Parity::mirror);
  return T;
}

// Linearization of hyper_stress at G0 applied to the increment in k: the Hessian of nu/p |G|^p.
SymField hyper_stress_linear(const Kinematics& k, const Grad3Field& G0, const ScalarField& Gn2, const Problem& p) {
  const Grid& g = p.grid;
  const double pe = p.mat.p_exp;
  Grad3Field H(g, zero_grad3(g.d));
  for_cells(g, [&](int i, int j) {
    const double mu = hyper_coefficient(Gn2(i, j), p.mat);
    if (mu == 0.0) return;
    double proj = 0.0;
    for (int c = 0; c < g.d; ++c) proj += ddot(G0(i, j)[c], k.G(i, j)[c]);
    const double radial = (pe - 2.0) * proj / Gn2(i, j);
    for (int c = 0; c < g.d; ++c) H(i, j)[c] = mu * (k.G(i, j)[c] + radial * G0(i, j)[c]);
  });
  fill_ghosts(H, g, p.bc);
  SymField T = divergence(H, g);
  for_cells(g, [&](int i, int j) { T(i, j) = -1.0 * T(i, j); });
  fill_ghosts(T, g, p.bc, Parity::mirror);
  return T;
}

VecField zero_vec(const Grid& g) { return VecField(g, Vec{}); }

const VecField& force_or_zero(const Problem& p, VecField& scratch) {
  if (p.force.nx() == p.grid.nx() && p.force.ny() == p.grid.ny()) return p.force;
  scratch = zero_vec(p.grid);
  return scratch;
}

// Damage-equation pointwise resolution; returns new alpha and writes rate and subgradient.
struct DamageCell {
  double alpha;
  double q;
  double s;
  bool clamped;
};

double devx(const SymTensor2& E) { return norm2(dev(E)); }

double ramp_f(double x, double eps) { return x / std::sqrt(1.0 + eps * x); }

struct LaggedFields {
  ScalarField w_prev;
  ScalarField Gm;
  ScalarField A;
  // Face conductivities indexed per axis, face between cell and its + neighbour.
  std::array<ScalarField, 2> kface;
};

LaggedFields lagged(const State& prev, const Problem& p) {
  const Grid& g = p.grid;
  LaggedFields L;
  L.w_prev = enthalpy_field(prev, p.mat, g);
  L.Gm = ScalarField(g, 0.0);
  L.A = ScalarField(g, 0.0);
  ScalarField kc(g, 0.0);
  for_cells(g, [&](int i, int j) {
    L.Gm(i, j) = p.mat.G_m(L.w_prev(i, j));
    L.A(i, j) = p.mat.A(L.w_prev(i, j));
    kc(i, j) = p.mat.conductivity(prev.alpha(i, j), L.w_prev(i, j));
  });
  for (int a = 0; a < 2; ++a) L.kface[a] = ScalarField(g, 0.0);
  for (int a = 0; a < g.d; ++a)
    for_cells(g, [&](int i, int j) {
      int ni, nj;
      if (!neighbour(g, p.bc, a, +1, i, j, ni, nj)) return;
      const double k0 = kc(i, j), k1 = kc(ni, nj);
      L.kface[a](i, j) = 2.0 * k0 * k1 / (k0 + k1);
    });
  return L;
}

ScalarField phi_thermal_field(const ScalarField& theta, const Problem& p) {
  ScalarField out(p.grid, 0.0);
  for_cells(p.grid, [&](int i, int j) { out(i, j) = heat_maps(std::max(0.0, theta(i, j)), p.mat).phi_thermal; });
  fill_ghosts(out, p.grid, p.bc);
  return out;
}

struct MomentumTerms {
  VecField R;
  double scale = 0.0;
};

// Full momentum residual for the given v and E; ghosts of all inputs must be synced.
MomentumTerms momentum_terms(const State& cur, const State& prev, double tau, const Problem& p) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const int d = g.d;
  const Kinematics k = kinematics(cur.v, p);
  const SymField Th = hyper_stress(k, p);

  SymField Tdiv(g, zero_sym(d));
  ScalarField phia(g, 0.0);
  SymField S(g, zero_sym(d));
  for_cells(g, [&](int i, int j) {
    const EnergyValue ev = stored_energy_reg(cur.E(i, j), std::clamp(cur.alpha(i, j), 0.0, 1.0), m.eps_reg, m);
    S(i, j) = ev.dE;
    phia(i, j) = ev.dalpha;
    Tdiv(i, j) = ev.dE + isotropic_D_apply(k.Eh(i, j), m.K_v, m.G_v) + Th(i, j);
  });
  fill_ghosts(Tdiv, g, p.bc, Parity::mirror);
  const VecField divT = divergence(Tdiv, g);

  const ScalarField phth = phi_thermal_field(cur.theta, p);
  const VecField gphth = gradient(phth, g);
  const Grad3Field gE = gradient(cur.E, g);
  const VecField ga = gradient(cur.alpha, g);
  const ScalarField la = laplacian(cur.alpha, g);

  // v (x) v with ghost products.
  std::array<VecField, 2> vv{VecField(g, Vec{}), VecField(g, Vec{})};
  for (int j = -(d == 2 ? Grid::ghost : 0); j < g.ny() + (d == 2 ? Grid::ghost : 0); ++j)
    for (int i = -Grid::ghost; i < g.nx() + Grid::ghost; ++i)
      for (int b = 0; b < d; ++b)
        for (int a = 0; a < d; ++a) vv[b](i, j)[a] = cur.v(i, j)[a] * cur.v(i, j)[b];

  VecField fscratch;
  const VecField& f = force_or_zero(p, fscratch);

  MomentumTerms out;
  out.R = zero_vec(g);
  double scale = 0.0;
  for_cells(g, [&](int i, int j) {
    const Vec& v = cur.v(i, j);
    const Vec& vp = prev.v(i, j);
    const double buoy = 1.0 - m.buoyancy(cur.theta(i, j));
    double cell_scale = 0.0;
    Vec r{};
    for (int a = 0; a < d; ++a) {
      double adv = 0.0, dvv = 0.0;
      for (int b = 0; b < d; ++b) {
        adv += v[b] * d_axis(cur.v, g, b, i, j)[a];
        dvv += d_axis(vv[b], g, b, i, j)[a];
      }
      double pot = phia(i, j) * ga(i, j)[a];
      pot += ddot(S(i, j), gE(i, j)[a]);
      const double kort = m.kappa * la(i, j) * ga(i, j)[a];
      const double inertia = m.rho * (v[a] - vp[a]) / tau;
      const double conv = 0.5 * m.rho * (adv + dvv);
      const double fa = f(i, j)[a] * buoy;
      r[a] = inertia + conv - divT(i, j)[a] - gphth(i, j)[a] - pot + kort - fa;
      cell_scale += m.rho * (std::abs(v[a]) + std::abs(vp[a])) / tau + std::abs(conv) +
                    std::abs(divT(i, j)[a]) + std::abs(gphth(i, j)[a]) + std::abs(pot) +
                    std::abs(kort) + std::abs(fa);
    }
    out.R(i, j) = r;
    scale = std::max(scale, cell_scale);
  });
  out.scale = scale;
  return out;
}

double field_inf(const VecField& v, const Grid& g) {
  double s = 0.0;
  for_cells(g, [&](int i, int j) {
    for (int a = 0; a < g.d; ++a) s = std::max(s, std::abs(v(i, j)[a]));
  });
  return s;
}

double rel(double num, double scale) {
  if (num == 0.0) return 0.0;
  return num / std::max(scale, kTiny);
}

// Solves (X - Xp)/tau + (v.grad)X - W X + X W = src for X, starting from X0.
SymField transport_solve(const SymField& Xp, const SymField& X0, const VecField& v,
                         const SymField& src, double tau, const Problem& p, double rel_tol,
                         int max_sweeps) {
  const Grid& g = p.grid;
  const int d = g.d;
  const int np = SymTensor2::size(d);
  SymField X = X0;
  fill_ghosts(X, g, p.bc, Parity::mirror);

  // Per-cell local operator I/tau + R_W and its velocity gradient.
  std::vector<std::array<double, 36>> Mloc(static_cast<std::size_t>(g.cells()));
  bool any_motion = false;
  double scale = 0.0;
  for_cells(g, [&](int i, int j) {
    const Tensor2 L = velocity_gradient(v, g, i, j);
    auto& M = Mloc[static_cast<std::size_t>(j * g.nx() + i)];
    M.fill(0.0);
    for (int c = 0; c < np; ++c) {
      SymTensor2 e(d);
      e.p[c] = 1.0;
      const SymTensor2 col = corotation(L, e);
      for (int r = 0; r < np; ++r) M[r * np + c] = col.p[r];
      M[c * np + c] += 1.0 / tau;
    }
    for (int a = 0; a < d; ++a) any_motion = any_motion || v(i, j)[a] != 0.0;
    scale = std::max({scale, norm(Xp(i, j)), tau * norm(src(i, j)), norm(X(i, j))});
  });
  const double target = rel_tol * std::max(scale, kTiny);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for_cells(g, [&](int i, int j) {
      std::array<double, 6> b{};
      SymTensor2 rhs = (1.0 / tau) * Xp(i, j) + src(i, j);
      for (int a = 0; a < d; ++a) {
        const double va = v(i, j)[a];
        if (va != 0.0) rhs = rhs - va * d_axis(X, g, a, i, j);
      }
      for (int c = 0; c < np; ++c) b[c] = rhs.p[c];
      auto M = Mloc[static_cast<std::size_t>(j * g.nx() + i)];
      dense_solve(M, b, np);
      SymTensor2 nx(d);
      for (int c = 0; c < np; ++c) nx.p[c] = b[c];
      change = std::max(change, norm(nx - X(i, j)));
      X(i, j) = nx;
    });
    fill_ghosts(X, g, p.bc, Parity::mirror);
    if (!any_motion || change <= target) break;
  }
  return X;
}

SymField stored_stress(const State& s, const Problem& p) {
  SymField S(p.grid, zero_sym(p.grid.d));
  for_cells(p.grid, [&](int i, int j) {
    S(i, j) = stored_energy_reg(s.E(i, j), std::clamp(s.alpha(i, j), 0.0, 1.0), p.mat.eps_reg, p.mat).dE;
  });
  fill_ghosts(S, p.grid, p.bc, Parity::mirror);
  return S;
}

// Creep with cellwise coefficient; Glen law handled by Picard on the coefficient.
SymField creep_impl(const SymField& S, const ScalarField& Gm, const Problem& p, double rel_tol,
                    int max_iter, const SymField* guess) {
  const Grid& g = p.grid;
  const int d = g.d;
  const int np = SymTensor2::size(d);
  const MaterialParams& m = p.mat;
  SymField Pi(g, zero_sym(d));
  if (d == 1) return Pi;
  SymField devS(g, zero_sym(d));
  for_cells(g, [&](int i, int j) { devS(i, j) = dev(S(i, j)); });

  auto coefficient_of = [&](double pin) {
    // Glen: G0 q |Pi|^(q-2), floored to stay finite at rest.
    return m.glen.G0 * m.glen.q * std::pow(std::max(pin, 1e-14), m.glen.q - 2.0);
  };

  if (m.varkappa == 0.0) {
    for_cells(g, [&](int i, int j) {
      const SymTensor2& D = devS(i, j);
      if (m.glen.enabled) {
        const double sn = norm(D);
        if (sn == 0.0) return;
        const double pin = std::pow(sn / (m.glen.G0 * m.glen.q), 1.0 / (m.glen.q - 1.0));
        Pi(i, j) = (pin / sn) * D;
      } else {
        Pi(i, j) = (1.0 / Gm(i, j)) * D;
      }
    });
  } else {
    ScalarField coef = Gm;
    if (guess) Pi = *guess;
    const int picard = m.glen.enabled ? 50 : 1;
    for (int pk = 0; pk < picard; ++pk) {
      if (m.glen.enabled)
        for_cells(g, [&](int i, int j) { coef(i, j) = coefficient_of(norm(Pi(i, j))); });
      SymField prev_pi = Pi;
      const std::size_t n = static_cast<std::size_t>(g.cells());
      std::vector<double> diag(n);
      for_cells(g, [&](int i, int j) {
        double kd = 0.0;
        for (int a = 0; a < d; ++a)
          for (int dir : {-1, 1}) {
            int ni, nj;
            if (neighbour(g, p.bc, a, dir, i, j, ni, nj)) kd += m.varkappa / (g.h[a] * g.h[a]);
          }
        diag[static_cast<std::size_t>(j * g.nx() + i)] = coef(i, j) + kd;
      });
      auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
        ScalarField f(g, 0.0);
        for_cells(g, [&](int i, int j) { f(i, j) = x[static_cast<std::size_t>(j * g.nx() + i)]; });
        fill_ghosts(f, g, p.bc);
        const ScalarField L = laplacian(f, g);
        for_cells(g, [&](int i, int j) {
          y[static_cast<std::size_t>(j * g.nx() + i)] = coef(i, j) * f(i, j) - m.varkappa * L(i, j);
        });
      };
      for (int c = 0; c < np; ++c) {
        std::vector<double> b(n), x(n);
        for_cells(g, [&](int i, int j) {
          const std::size_t k = static_cast<std::size_t>(j * g.nx() + i);
          b[k] = devS(i, j).p[c];
          x[k] = Pi(i, j).p[c];
        });
        conjugate_gradient(apply, b, x, rel_tol, max_iter, &diag);
        for_cells(g, [&](int i, int j) { Pi(i, j).p[c] = x[static_cast<std::size_t>(j * g.nx() + i)]; });
      }
      for_cells(g, [&](int i, int j) { Pi(i, j) = dev(Pi(i, j)); });
      if (!m.glen.enabled) break;
      double change = 0.0, mag = 0.0;
      for_cells(g, [&](int i, int j) {
        change = std::max(change, norm(Pi(i, j) - prev_pi(i, j)));
        mag = std::max(mag, norm(Pi(i, j)));
      });
      if (change <= rel_tol * std::max(mag, kTiny)) break;
    }
  }
  fill_ghosts(Pi, g, p.bc, Parity::even);
  return Pi;
}

struct DamageResult {
  ScalarField alpha;
  ScalarField q;
  ScalarField s;
  int clamped = 0;
  double change = 0.0;
};

// Pointwise damage resolution for one cell with neighbours held fixed.
DamageCell damage_cell(const State& cur, const State& prev, const ScalarField& alpha, double tau,
                       const Problem& p, const LaggedFields& lag, int i, int j) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const double x = devx(cur.E(i, j));
  const double a = 2.0 * m.G_e0 * ramp_f(x, m.eps_reg) + m.G_d / m.kappa;
  const double b = -m.G_d / m.kappa;
  double kd = 0.0, ns = 0.0;
  for (int ax = 0; ax < g.d; ++ax)
    for (int dir : {-1, 1}) {
      int ni, nj;
      if (!neighbour(g, p.bc, ax, dir, i, j, ni, nj)) continue;
      const double w = m.kappa / (g.h[ax] * g.h[ax]);
      kd += w;
      ns += w * alpha(ni, nj);
    }
  double c = 0.0;
  for (int ax = 0; ax < g.d; ++ax) c += cur.v(i, j)[ax] * d_axis(alpha, g, ax, i, j);
  const double ap = prev.alpha(i, j);
  const double sq = std::sqrt(tau);
  const double Ltau = (a + kd) * tau + sq;
  const double B = Ltau * c - (a + kd) * ap - b + ns;
  const double A = lag.A(i, j);
  DamageCell out{};
  if (B > 0.0) {
    out.q = B / (2.0 * (A + m.eps_zeta) + Ltau);
    out.s = 2.0 * (A + m.eps_zeta) * out.q;
  } else if (B < -m.sigma_f) {
    out.q = (B + m.sigma_f) / (2.0 * m.eps_zeta + Ltau);
    out.s = -m.sigma_f + 2.0 * m.eps_zeta * out.q;
  } else {
    out.q = 0.0;
    out.s = B;
  }
  out.alpha = ap + tau * (out.q - c);
  out.clamped = false;
  if (out.alpha < 0.0 || out.alpha > 1.0) {
    out.alpha = std::clamp(out.alpha, 0.0, 1.0);
    out.clamped = true;
  }
  return out;
}

DamageResult damage_impl(const State& cur, const State& prev, double tau, const Problem& p,
                         const LaggedFields& lag, double abs_tol, int max_sweeps, bool single_jacobi) {
  const Grid& g = p.grid;
  DamageResult r;
  r.alpha = cur.alpha;
  fill_ghosts(r.alpha, g, p.bc);
  r.q = ScalarField(g, 0.0);
  r.s = ScalarField(g, 0.0);
  if (single_jacobi) {
    ScalarField next = r.alpha;
    for_cells(g, [&](int i, int j) {
      const DamageCell dc = damage_cell(cur, prev, r.alpha, tau, p, lag, i, j);
      r.change = std::max(r.change, std::abs(dc.alpha - r.alpha(i, j)));
      next(i, j) = dc.alpha;
      r.q(i, j) = dc.q;
      r.s(i, j) = dc.s;
    });
    r.alpha = next;
    fill_ghosts(r.alpha, g, p.bc);
    return r;
  }
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    int clamped = 0;
    for_cells(g, [&](int i, int j) {
      const DamageCell dc = damage_cell(cur, prev, r.alpha, tau, p, lag, i, j);
      change = std::max(change, std::abs(dc.alpha - r.alpha(i, j)));
      r.alpha(i, j) = dc.alpha;
      r.q(i, j) = dc.q;
      r.s(i, j) = dc.s;
      clamped += dc.clamped ? 1 : 0;
    });
    fill_ghosts(r.alpha, g, p.bc);
    r.change = change;
    r.clamped = clamped;
    if (change <= abs_tol) break;
  }
  return r;
}

struct ThermalSystem {
  ScalarField chi_hat;  // advected previous phase fraction
  ScalarField source;   // volumetric heat source including boundary inflow
  ScalarField w_prev;
  std::array<ScalarField, 2> kface;
  std::array<ScalarField, 2> uface;  // face velocity, face between cell and + neighbour
  double boundary_power = 0.0;       // total inflow per unit time
};

ThermalSystem thermal_system(const State& cur, const State& prev, double tau, const HeatSources& src,
                             const Problem& p, const LaggedFields& lag) {
  const Grid& g = p.grid;
  ThermalSystem t;
  ScalarField chip = prev.chi;
  fill_ghosts(chip, g, p.bc);
  const ScalarField adv = upwind_advection(cur.v, chip, g);
  t.chi_hat = ScalarField(g, 0.0);
  for_cells(g, [&](int i, int j) { t.chi_hat(i, j) = prev.chi(i, j) - tau * adv(i, j); });
  t.w_prev = lag.w_prev;
  t.kface = lag.kface;
  t.source = ScalarField(g, 0.0);
  const double t0 = prev.time, t1 = prev.time + tau;
  for_cells(g, [&](int i, int j) { t.source(i, j) = src.dissipation(i, j) + src.adiabatic(i, j); });
  for (int a = 0; a < g.d; ++a) {
    if (p.bc.axis[a] != AxisBC::wall) continue;
    const double lo = p.bc.heat[2 * a].average(t0, t1);
    const double hi = p.bc.heat[2 * a + 1].average(t0, t1);
    const int n = a == 0 ? g.nx() : g.ny();
    for_cells(g, [&](int i, int j) {
      const int k = a == 0 ? i : j;
      if (k == 0) t.source(i, j) += lo / g.h[a];
      if (k == n - 1) t.source(i, j) += hi / g.h[a];
    });
    const int nb = a == 0 ? g.ny() : g.nx();
    t.boundary_power += (lo + hi) * g.face_area(a) * nb;
  }
  for (int a = 0; a < 2; ++a) t.uface[a] = ScalarField(g, 0.0);
  for (int a = 0; a < g.d; ++a)
    for_cells(g, [&](int i, int j) {
      int ni, nj;
      if (!neighbour(g, p.bc, a, +1, i, j, ni, nj)) return;
      t.uface[a](i, j) = face_velocity(cur.v, a, i, j);
    });
  return t;
}

struct ChiEval {
  double chi;
  double dchi;
};

ChiEval chi_of(double chi_hat, double theta, double tau, const MaterialParams& m) {
  const double x = theta / m.theta_pt - 1.0;
  const double raw = chi_hat + (tau / m.omega) * upsilon(x, m.x_cap);
  if (raw <= 0.0) return {0.0, 0.0};
  if (raw >= 1.0) return {1.0, 0.0};
  return {raw, (tau / m.omega) * upsilon_prime(x, m.x_cap) / m.theta_pt};
}

double heat_capacity_at(double theta, const MaterialParams& m) { return m.c_curve(std::max(theta, 0.0)); }

struct HeatEval {
  std::vector<double> F;
  double scale = 0.0;
};

HeatEval heat_residual(const std::vector<double>& theta, const ThermalSystem& t, double tau,
                       const Problem& p, std::vector<double>* wout = nullptr) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const int nx = g.nx();
  const std::size_t n = static_cast<std::size_t>(g.cells());
  std::vector<double> w(n), scale(n, 0.0);
  HeatEval out;
  out.F.assign(n, 0.0);
  for_cells(g, [&](int i, int j) {
    const std::size_t k = static_cast<std::size_t>(j * nx + i);
    const double th = theta[k];
    w[k] = gamma_tilde(std::max(th, 0.0), m) + m.latent_l * chi_of(t.chi_hat(i, j), th, tau, m).chi;
    const double dw = (w[k] - t.w_prev(i, j)) / tau;
    out.F[k] += dw - t.source(i, j);
    scale[k] += (std::abs(w[k]) + std::abs(t.w_prev(i, j))) / tau + std::abs(t.source(i, j));
  });
  for (int a = 0; a < g.d; ++a)
    for_cells(g, [&](int i, int j) {
      int ni, nj;
      if (!neighbour(g, p.bc, a, +1, i, j, ni, nj)) return;
      const std::size_t k0 = static_cast<std::size_t>(j * nx + i);
      const std::size_t k1 = static_cast<std::size_t>(nj * nx + ni);
      const double u = t.uface[a](i, j);
      const double flux = u * (u > 0 ? w[k0] : w[k1]) / g.h[a];
      const double cond = t.kface[a](i, j) * (theta[k1] - theta[k0]) / (g.h[a] * g.h[a]);
      out.F[k0] += flux - cond;
      out.F[k1] += -flux + cond;
      scale[k0] += std::abs(flux) + std::abs(cond);
      scale[k1] += std::abs(flux) + std::abs(cond);
    });
  for (double s : scale) out.scale = std::max(out.scale, s);
  if (wout) *wout = w;
  return out;
}

double inf_norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s = std::max(s, std::abs(v));
  return s;
}

double two_norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Damped Newton for the joint enthalpy and phase update.
int heat_newton(std::vector<double>& theta, const ThermalSystem& t, double tau, const Problem& p,
                double rel_tol, int max_iter, int* clamped) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const int nx = g.nx();
  const int n = g.cells();
  int clamp_count = 0;
  HeatEval r = heat_residual(theta, t, tau, p);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (inf_norm(r.F) <= rel_tol * std::max(r.scale, kTiny)) break;
    std::vector<double> dw(static_cast<std::size_t>(n));
    for_cells(g, [&](int i, int j) {
      const std::size_t k = static_cast<std::size_t>(j * nx + i);
      dw[k] = heat_capacity_at(theta[k], m) + m.latent_l * chi_of(t.chi_hat(i, j), theta[k], tau, m).dchi;
    });
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * 5);
    for (int k = 0; k < n; ++k) trip.emplace_back(k, k, dw[static_cast<std::size_t>(k)] / tau);
    for (int a = 0; a < g.d; ++a)
      for_cells(g, [&](int i, int j) {
        int ni, nj;
        if (!neighbour(g, p.bc, a, +1, i, j, ni, nj)) return;
        const int k0 = j * nx + i, k1 = nj * nx + ni;
        const double u = t.uface[a](i, j) / g.h[a];
        const int up = u > 0 ? k0 : k1;
        const double du = u * dw[static_cast<std::size_t>(up)];
        trip.emplace_back(k0, up, du);
        trip.emplace_back(k1, up, -du);
        const double c = t.kface[a](i, j) / (g.h[a] * g.h[a]);
        trip.emplace_back(k0, k0, c);
        trip.emplace_back(k0, k1, -c);
        trip.emplace_back(k1, k1, c);
        trip.emplace_back(k1, k0, -c);
      });
    Eigen::SparseMatrix<double> J(n, n);
    J.setFromTriplets(trip.begin(), trip.end());
    J.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) break;
    Eigen::VectorXd rhs(n);
    for (int k = 0; k < n; ++k) rhs[k] = -r.F[static_cast<std::size_t>(k)];
    const Eigen::VectorXd delta = lu.solve(rhs);
    const double f0 = two_norm(r.F);
    double lam = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      std::vector<double> trial = theta;
      int cc = 0;
      for (int k = 0; k < n; ++k) {
        trial[static_cast<std::size_t>(k)] += lam * delta[k];
        if (trial[static_cast<std::size_t>(k)] < 0.0) {
          trial[static_cast<std::size_t>(k)] = 0.0;
          ++cc;
        }
      }
      HeatEval rt = heat_residual(trial, t, tau, p);
      if (two_norm(rt.F) <= (1.0 - 1e-4 * lam) * f0 || ls == 29) {
        theta = trial;
        r = rt;
        clamp_count = cc;
        accepted = true;
        break;
      }
      lam *= 0.5;
    }
    if (!accepted) break;
  }
  if (clamped) *clamped = clamp_count;
  return it;
}

HeatSources heat_sources(const State& cur, const Problem& p, const LaggedFields& lag,
                         const ScalarField& xi, double tau, const ScalarField& theta_for_pressure) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const Kinematics k = kinematics(cur.v, p);
  HeatSources s{ScalarField(g, 0.0), ScalarField(g, 0.0)};
  const ScalarField creep_grad = face_gradient_density(cur.Pi, g, p.bc);
  const double factor = 1.0 - std::pow(tau, 0.25);
  for_cells(g, [&](int i, int j) {
    const double pin2 = norm2(cur.Pi(i, j));
    double maxwell = lag.Gm(i, j) * pin2;
    if (m.glen.enabled) maxwell = m.glen.G0 * m.glen.q * std::pow(std::sqrt(pin2), m.glen.q);
    const double stokes = ddot(isotropic_D_apply(k.Eh(i, j), m.K_v, m.G_v), k.Eh(i, j));
    const double hyper = m.nu * std::pow(k.Gn2(i, j), 0.5 * m.p_exp);
    s.dissipation(i, j) = maxwell + stokes + hyper + factor * xi(i, j) + m.varkappa * creep_grad(i, j);
    s.adiabatic(i, j) =
        heat_maps(std::max(0.0, theta_for_pressure(i, j)), m).phi_thermal * k.divv(i, j);
  });
  return s;
}

// Solve the preconditioned modified-Newton momentum block; updates cur.v and cur.E.
void momentum_block(State& cur, const State& prev, double tau, const Problem& p, double rel_tol) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const int d = g.d;
  const int nx = g.nx();
  const std::size_t n = static_cast<std::size_t>(g.cells() * d);
  const double inner = p.solver.inner_factor * p.solver.tol;

  auto solve_strain = [&](State& s) {
    s.E = transport_solve(prev.E, s.E, s.v, [&] {
      SymField src = strain_rate(s.v, g);
      for_cells(g, [&](int i, int j) { src(i, j) = src(i, j) - s.Pi(i, j); });
      return src;
    }(), tau, p, inner, p.solver.max_inner);
  };
  auto to_vec = [&](const VecField& f) {
    std::vector<double> x(n);
    for_cells(g, [&](int i, int j) {
      for (int a = 0; a < d; ++a) x[static_cast<std::size_t>((j * nx + i) * d + a)] = f(i, j)[a];
    });
    return x;
  };
  auto from_vec = [&](const std::vector<double>& x) {
    VecField f = zero_vec(g);
    for_cells(g, [&](int i, int j) {
      for (int a = 0; a < d; ++a) f(i, j)[a] = x[static_cast<std::size_t>((j * nx + i) * d + a)];
    });
    fill_ghosts(f, g, p.bc);
    return f;
  };

  fill_ghosts(cur.v, g, p.bc);
  solve_strain(cur);
  MomentumTerms mt = momentum_terms(cur, prev, tau, p);
  for (int it = 0; it < 60; ++it) {
    const double rn = field_inf(mt.R, g);
    if (rn <= rel_tol * std::max(mt.scale, kTiny)) break;
    // Frozen coefficients of the linearized operator.
    const Kinematics kin = kinematics(cur.v, p);
    ScalarField Ge(g, 0.0);
    for_cells(g, [&](int i, int j) { Ge(i, j) = m.G_e(std::clamp(cur.alpha(i, j), 0.0, 1.0)); });
    auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
      const VecField dv = from_vec(x);
      Kinematics k;
      k.Eh = strain_rate(dv, g);
      fill_ghosts(k.Eh, g, p.bc, Parity::mirror);
      k.G = gradient(k.Eh, g);
      fill_ghosts(k.G, g, p.bc);
      const SymField Th = hyper_stress_linear(k, kin.G, kin.Gn2, p);
      SymField T(g, zero_sym(d));
      for_cells(g, [&](int i, int j) {
        T(i, j) = isotropic_D_apply(k.Eh(i, j), m.K_v, m.G_v) +
                  tau * isotropic_C_apply(k.Eh(i, j), m.K_e, Ge(i, j)) + Th(i, j);
      });
      fill_ghosts(T, g, p.bc, Parity::mirror);
      const VecField divT = divergence(T, g);
      for_cells(g, [&](int i, int j) {
        for (int a = 0; a < d; ++a) {
          const std::size_t kk = static_cast<std::size_t>((j * nx + i) * d + a);
          y[kk] = m.rho / tau * x[kk] - divT(i, j)[a];
        }
      });
    };
    std::vector<double> rhs = to_vec(mt.R);
    for (double& r : rhs) r = -r;
    std::vector<double> delta(n, 0.0);
    conjugate_gradient(apply, rhs, delta, 1e-3, 500);

    const std::vector<double> v0 = to_vec(cur.v);
    double f0 = 0.0;
    for_cells(g, [&](int i, int j) { f0 += vdot(mt.R(i, j), mt.R(i, j), d); });
    f0 = std::sqrt(f0);
    double lam = 1.0;
    State trial = cur;
    for (int ls = 0; ls < 12; ++ls) {
      std::vector<double> x = v0;
      for (std::size_t k = 0; k < n; ++k) x[k] += lam * delta[k];
      trial.v = from_vec(x);
      trial.E = cur.E;
      solve_strain(trial);
      MomentumTerms tt = momentum_terms(trial, prev, tau, p);
      double f1 = 0.0;
      for_cells(g, [&](int i, int j) { f1 += vdot(tt.R(i, j), tt.R(i, j), d); });
      f1 = std::sqrt(f1);
      if (f1 <= (1.0 - 1e-4 * lam) * f0 || ls == 11) {
        cur.v = trial.v;
        cur.E = trial.E;
        mt = tt;
        break;
      }
      lam *= 0.5;
    }
  }
}

}  // namespace

double BlockResiduals::max() const {
  return std::max({momentum, strain, creep, damage, heat, chi});
}

void Problem::validate() const {
  mat.validate(grid.d);
  bc.validate(grid);
  if (!(solver.tol > 0)) throw std::invalid_argument("solver tolerance must be positive");
  if (solver.max_outer < 1) throw std::invalid_argument("max_outer must be at least 1");
  if (mode == MechanicsMode::rigid_rotation && grid.d != 2)
    throw std::invalid_argument("rigid rotation needs a 2D grid");
}

State State::rest(const Problem& p, double theta0) {
  const Grid& g = p.grid;
  State s;
  s.v = VecField(g, Vec{});
  s.E = SymField(g, SymTensor2(g.d));
  s.Pi = SymField(g, SymTensor2(g.d));
  s.P = SymField(g, SymTensor2(g.d));
  s.alpha = ScalarField(g, 1.0);
  s.theta = ScalarField(g, theta0);
  s.chi = ScalarField(g, 0.0);
  return s;
}

ScalarField enthalpy_field(const State& s, const MaterialParams& m, const Grid& g) {
  ScalarField w(g, 0.0);
  for_cells(g, [&](int i, int j) { w(i, j) = enthalpy_of(std::max(0.0, s.theta(i, j)), s.chi(i, j), m); });
  return w;
}

VecField rigid_velocity(const Problem& p) {
  const Grid& g = p.grid;
  VecField v(g, Vec{});
  const double om = p.rotation_rate;
  for (int j = -Grid::ghost; j < g.ny() + Grid::ghost; ++j)
    for (int i = -Grid::ghost; i < g.nx() + Grid::ghost; ++i) {
      const double x = g.center(0, i) - p.rotation_center[0];
      const double y = g.center(1, j) - p.rotation_center[1];
      v(i, j) = {-om * y, om * x, 0.0};
    }
  return v;
}

namespace {

void sync(State& s, const Problem& p) {
  const Grid& g = p.grid;
  if (p.mode != MechanicsMode::rigid_rotation) fill_ghosts(s.v, g, p.bc);
  fill_ghosts(s.E, g, p.bc, Parity::mirror);
  fill_ghosts(s.Pi, g, p.bc, Parity::even);
  fill_ghosts(s.P, g, p.bc, Parity::mirror);
  fill_ghosts(s.alpha, g, p.bc);
  fill_ghosts(s.theta, g, p.bc);
  fill_ghosts(s.chi, g, p.bc);
}

SymField strain_source(const State& cur, const Problem& p) {
  SymField src = strain_rate(cur.v, p.grid);
  for_cells(p.grid, [&](int i, int j) { src(i, j) = src(i, j) - cur.Pi(i, j); });
  return src;
}

std::pair<SymField, double> strain_residual_impl(const State& cur, const State& prev, double tau,
                                                 const Problem& p) {
  const Grid& g = p.grid;
  const SymField src = strain_source(cur, p);
  SymField R(g, zero_sym(g.d));
  double scale = 0.0;
  for_cells(g, [&](int i, int j) {
    const Tensor2 L = velocity_gradient(cur.v, g, i, j);
    SymTensor2 adv(g.d);
    for (int a = 0; a < g.d; ++a) adv += cur.v(i, j)[a] * d_axis(cur.E, g, a, i, j);
    const SymTensor2 rot = corotation(L, cur.E(i, j));
    const SymTensor2 dt = (1.0 / tau) * (cur.E(i, j) - prev.E(i, j));
    R(i, j) = dt + adv + rot - src(i, j);
    scale = std::max(scale, (norm(cur.E(i, j)) + norm(prev.E(i, j))) / tau + norm(adv) + norm(rot) +
                                norm(src(i, j)));
  });
  return {R, scale};
}

double sym_inf(const SymField& f, const Grid& g) {
  double s = 0.0;
  for_cells(g, [&](int i, int j) { s = std::max(s, norm(f(i, j))); });
  return s;
}

double creep_residual(const State& cur, const Problem& p, const LaggedFields& lag) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  if (g.d == 1) return 0.0;
  const SymField S = stored_stress(cur, p);
  SymField Pi = cur.Pi;
  fill_ghosts(Pi, g, p.bc, Parity::even);
  const SymField L = laplacian(Pi, g);
  double num = 0.0, scale = 0.0;
  for_cells(g, [&](int i, int j) {
    const SymTensor2 D = dev(S(i, j));
    double coef = lag.Gm(i, j);
    if (m.glen.enabled) coef = m.glen.G0 * m.glen.q * std::pow(std::max(norm(Pi(i, j)), 1e-14), m.glen.q - 2.0);
    const SymTensor2 a = coef * Pi(i, j);
    const SymTensor2 b = m.varkappa * L(i, j);
    num = std::max(num, norm(a - b - D));
    scale = std::max(scale, norm(a) + norm(b) + norm(D));
  });
  return rel(num, scale);
}

}  // namespace

double tau_max(const State& prev, const Problem& p) {
  const Grid& g = p.grid;
  double t = std::numeric_limits<double>::infinity();
  const double K = semiconvexity_constant(p.mat, g.d);
  if (K > 0) t = std::min(t, 1.0 / (K * K));
  const double ez = p.mat.eps_zeta;
  t = std::min(t, 256.0 * ez * ez * ez * ez);
  VecField v = prev.v;
  if (p.mode == MechanicsMode::rigid_rotation)
    v = rigid_velocity(p);
  else
    fill_ghosts(v, g, p.bc);
  double gmax = 0.0;
  for_cells(g, [&](int i, int j) { gmax = std::max(gmax, norm(velocity_gradient(v, g, i, j))); });
  if (gmax > 0) t = std::min(t, 0.5 / gmax);
  return t;
}

StressBundle stress_bundle(const State& s0, const Problem& p) {
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const int d = g.d;
  State s = s0;
  sync(s, p);
  const Kinematics k = kinematics(s.v, p);
  const SymField Th = hyper_stress(k, p);
  const VecField ga = gradient(s.alpha, g);
  StressBundle b{SymField(g, zero_sym(d)), SymField(g, zero_sym(d)), SymField(g, zero_sym(d)),
                 SymField(g, zero_sym(d)), SymField(g, zero_sym(d))};
  for_cells(g, [&](int i, int j) {
    const EnergyValue ev = stored_energy_reg(s.E(i, j), std::clamp(s.alpha(i, j), 0.0, 1.0), m.eps_reg, m);
    const double phth = heat_maps(std::max(0.0, s.theta(i, j)), m).phi_thermal;
    b.S(i, j) = ev.dE;
    b.Sigma(i, j) = ev.dE + (ev.value + phth) * SymTensor2::identity(d);
    SymTensor2 K(d);
    double g2 = 0.0;
    for (int a = 0; a < d; ++a) g2 += ga(i, j)[a] * ga(i, j)[a];
    for (int a = 0; a < d; ++a)
      for (int c = a; c < d; ++c) K(a, c) = -m.kappa * ga(i, j)[a] * ga(i, j)[c];
    K = K + (0.5 * m.kappa * g2) * SymTensor2::identity(d);
    b.K(i, j) = K;
    b.Dstress(i, j) = isotropic_D_apply(k.Eh(i, j), m.K_v, m.G_v) + Th(i, j);
    b.T(i, j) = b.Sigma(i, j) + b.K(i, j) + b.Dstress(i, j);
  });
  return b;
}

VecField momentum_residual(const State& cur0, const State& prev, double tau, const Problem& p) {
  State cur = cur0;
  sync(cur, p);
  return momentum_terms(cur, prev, tau, p).R;
}

SymField strain_residual(const State& cur0, const State& prev, double tau, const Problem& p) {
  State cur = cur0;
  sync(cur, p);
  return strain_residual_impl(cur, prev, tau, p).first;
}

SymField strain_update(const State& cur0, const State& prev, double tau, const Problem& p) {
  State cur = cur0;
  sync(cur, p);
  return transport_solve(prev.E, cur.E, cur.v, strain_source(cur, p), tau, p,
                         p.solver.inner_factor * p.solver.tol, p.solver.max_inner);
}

SymField creep_solve(const SymField& S, const ScalarField& w_prev, const Problem& p) {
  ScalarField Gm(p.grid, 0.0);
  for_cells(p.grid, [&](int i, int j) { Gm(i, j) = p.mat.G_m(w_prev(i, j)); });
  return creep_impl(S, Gm, p, p.solver.inner_factor * p.solver.tol, 2000, nullptr);
}

ScalarField damage_solve(const State& cur0, const State& prev, double tau, const Problem& p) {
  State cur = cur0;
  sync(cur, p);
  const LaggedFields lag = lagged(prev, p);
  return damage_impl(cur, prev, tau, p, lag, p.solver.inner_factor * p.solver.tol, 10000, false).alpha;
}

void heat_solve(State& cur, const State& prev, double tau, const HeatSources& src, const Problem& p,
                int* theta_clamped) {
  sync(cur, p);
  const LaggedFields lag = lagged(prev, p);
  const ThermalSystem t = thermal_system(cur, prev, tau, src, p, lag);
  const Grid& g = p.grid;
  std::vector<double> th(static_cast<std::size_t>(g.cells()));
  for_cells(g, [&](int i, int j) { th[static_cast<std::size_t>(j * g.nx() + i)] = cur.theta(i, j); });
  heat_newton(th, t, tau, p, p.solver.inner_factor * p.solver.tol, 100, theta_clamped);
  for_cells(g, [&](int i, int j) {
    const double v = th[static_cast<std::size_t>(j * g.nx() + i)];
    cur.theta(i, j) = v;
    cur.chi(i, j) = chi_of(t.chi_hat(i, j), v, tau, p.mat).chi;
  });
  fill_ghosts(cur.theta, g, p.bc);
  fill_ghosts(cur.chi, g, p.bc);
}

ScalarField chi_solve(const State& cur0, const State& prev, double tau, const Problem& p) {
  State cur = cur0;
  sync(cur, p);
  const Grid& g = p.grid;
  ScalarField chip = prev.chi;
  fill_ghosts(chip, g, p.bc);
  const ScalarField adv = upwind_advection(cur.v, chip, g);
  ScalarField out(g, 0.0);
  for_cells(g, [&](int i, int j) {
    out(i, j) = chi_of(prev.chi(i, j) - tau * adv(i, j), cur.theta(i, j), tau, p.mat).chi;
  });
  fill_ghosts(out, g, p.bc);
  return out;
}

SymField reconstruct_P(const State& cur0, const State& prev, double tau, const Problem& p) {
  State cur = cur0;
  sync(cur, p);
  SymField Pp = prev.P;
  fill_ghosts(Pp, p.grid, p.bc, Parity::mirror);
  return transport_solve(Pp, Pp, cur.v, cur.Pi, tau, p, p.solver.inner_factor * p.solver.tol,
                         p.solver.max_inner);
}

StepResult step(const State& prev0, double tau, const Problem& p) {
  if (!(tau > 0)) throw std::invalid_argument("time step must be positive");
  const double tmax = tau_max(prev0, p);
  if (tau > tmax * (1.0 + 1e-12))
    throw std::invalid_argument("time step exceeds the admissible bound " + std::to_string(tmax));
  const Grid& g = p.grid;
  const MaterialParams& m = p.mat;
  const int d = g.d;
  const double tol = p.solver.tol;
  const double inner = p.solver.inner_factor * tol;

  State prev = prev0;
  sync(prev, p);
  const LaggedFields lag = lagged(prev, p);

  State cur = prev;
  cur.time = prev.time + tau;
  if (p.mode == MechanicsMode::rigid_rotation) cur.v = rigid_velocity(p);
  if (p.mode == MechanicsMode::frozen) {
    cur.v = zero_vec(g);
    fill_ghosts(cur.v, g, p.bc);
  }

  StepReport rep;
  rep.tau = tau;
  DamageResult dmg;
  dmg.q = ScalarField(g, 0.0);
  dmg.s = ScalarField(g, 0.0);
  ScalarField xi(g, 0.0);
  int theta_clamped = 0;

  for (int it = 1; it <= p.solver.max_outer; ++it) {
    rep.outer_iterations = it;
    ScalarField theta_lag = cur.theta;
    if (p.mode == MechanicsMode::dynamic) {
      momentum_block(cur, prev, tau, p, inner);
    } else {
      cur.E = transport_solve(prev.E, cur.E, cur.v, strain_source(cur, p), tau, p, inner, p.solver.max_inner);
    }
    cur.E = transport_solve(prev.E, cur.E, cur.v, strain_source(cur, p), tau, p, inner, p.solver.max_inner);
    const SymField S = stored_stress(cur, p);
    cur.Pi = creep_impl(S, lag.Gm, p, inner, 4000, &cur.Pi);
    dmg = damage_impl(cur, prev, tau, p, lag, inner, 20000, false);
    cur.alpha = dmg.alpha;
    rep.alpha_clamped = dmg.clamped;
    for_cells(g, [&](int i, int j) { xi(i, j) = dmg.s(i, j) * dmg.q(i, j); });
    const HeatSources src = heat_sources(cur, p, lag, xi, tau, theta_lag);
    {
      const ThermalSystem t = thermal_system(cur, prev, tau, src, p, lag);
      std::vector<double> th(static_cast<std::size_t>(g.cells()));
      for_cells(g, [&](int i, int j) { th[static_cast<std::size_t>(j * g.nx() + i)] = cur.theta(i, j); });
      heat_newton(th, t, tau, p, inner, 100, &theta_clamped);
      for_cells(g, [&](int i, int j) {
        const double v = th[static_cast<std::size_t>(j * g.nx() + i)];
        cur.theta(i, j) = v;
        cur.chi(i, j) = chi_of(t.chi_hat(i, j), v, tau, m).chi;
      });
    }
    sync(cur, p);

    // Residuals of every block at the swept state.
    BlockResiduals r;
    if (p.mode == MechanicsMode::dynamic) {
      const MomentumTerms mt = momentum_terms(cur, prev, tau, p);
      r.momentum = rel(field_inf(mt.R, g), mt.scale);
    }
    {
      auto [R, sc] = strain_residual_impl(cur, prev, tau, p);
      r.strain = rel(sym_inf(R, g), sc);
    }
    r.creep = creep_residual(cur, p, lag);
    {
      const DamageResult one = damage_impl(cur, prev, tau, p, lag, 0.0, 1, true);
      r.damage = one.change;
    }
    {
      for_cells(g, [&](int i, int j) { xi(i, j) = dmg.s(i, j) * dmg.q(i, j); });
      const HeatSources src2 = heat_sources(cur, p, lag, xi, tau, cur.theta);
      const ThermalSystem t = thermal_system(cur, prev, tau, src2, p, lag);
      std::vector<double> th(static_cast<std::size_t>(g.cells()));
      for_cells(g, [&](int i, int j) { th[static_cast<std::size_t>(j * g.nx() + i)] = cur.theta(i, j); });
      const HeatEval he = heat_residual(th, t, tau, p);
      r.heat = rel(inf_norm(he.F), he.scale);
      double cm = 0.0;
      for_cells(g, [&](int i, int j) {
        cm = std::max(cm, std::abs(cur.chi(i, j) - chi_of(t.chi_hat(i, j), cur.theta(i, j), tau, m).chi));
      });
      r.chi = cm;
    }
    rep.residuals = r;
    if (r.max() <= tol) {
      rep.converged = true;
      break;
    }
  }
  rep.theta_clamped = theta_clamped;
  if (!rep.converged)
    throw NonconvergenceError("outer iteration did not converge", rep.residuals);

  if (p.reconstruct_P) {
    SymField Pp = prev.P;
    cur.P = transport_solve(Pp, Pp, cur.v, cur.Pi, tau, p, inner, p.solver.max_inner);
  }

  // Energy channels of the converged step.
  StepChannels& ch = rep.channels;
  const double vol = g.cell_volume();
  const Kinematics kin = kinematics(cur.v, p);
  const ScalarField phth = phi_thermal_field(cur.theta, p);
  VecField fscratch;
  const VecField& f = force_or_zero(p, fscratch);
  double dm = 0, ds = 0, dh = 0, dd = 0, di = 0, wf = 0, ad = 0, qp = 0, ent = 0;
  double theta_min = std::numeric_limits<double>::infinity();
  for_cells(g, [&](int i, int j) {
    const double pin2 = norm2(cur.Pi(i, j));
    double maxwell = lag.Gm(i, j) * pin2;
    if (m.glen.enabled) maxwell = m.glen.G0 * m.glen.q * std::pow(std::sqrt(pin2), m.glen.q);
    const double stokes = ddot(isotropic_D_apply(kin.Eh(i, j), m.K_v, m.G_v), kin.Eh(i, j));
    const double hyper = m.nu * std::pow(kin.Gn2(i, j), 0.5 * m.p_exp);
    const double x = dmg.s(i, j) * dmg.q(i, j);
    dm += maxwell;
    ds += stokes;
    dh += hyper;
    dd += x;
    Vec dv{};
    for (int a = 0; a < d; ++a) dv[a] = cur.v(i, j)[a] - prev.v(i, j)[a];
    di += 0.5 * m.rho * vdot(dv, dv, d);
    const double buoy = 1.0 - m.buoyancy(cur.theta(i, j));
    for (int a = 0; a < d; ++a) wf += f(i, j)[a] * buoy * cur.v(i, j)[a];
    ad += phth(i, j) * kin.divv(i, j);
    qp += dmg.q(i, j) * dmg.q(i, j);
    theta_min = std::min(theta_min, cur.theta(i, j));
  });
  const ScalarField cg = face_gradient_density(cur.Pi, g, p.bc);
  ch.diss_maxwell = tau * dm * vol;
  ch.diss_stokes = tau * ds * vol;
  ch.diss_hyper = tau * dh * vol;
  ch.diss_damage = tau * dd * vol;
  ch.diss_creep_gradient = tau * m.varkappa * integrate(cg, g);
  ch.dropped_inertia = di * vol;
  ch.adiabatic = tau * ad * vol;
  ch.q_penalty = 0.5 * tau * std::sqrt(tau) * qp * vol;
  {
    const ThermalSystem t = thermal_system(cur, prev, tau, HeatSources{ScalarField(g, 0.0), ScalarField(g, 0.0)}, p, lag);
    ch.work_heat = tau * t.boundary_power;
  }
  if (p.mode == MechanicsMode::rigid_rotation) {
    // Weak-form power of the prescribed motion: momentum residual tested with v, integrated by parts.
    const SymField S = stored_stress(cur, p);
    const Grad3Field gE = gradient(cur.E, g);
    const VecField ga = gradient(cur.alpha, g);
    const ScalarField la = laplacian(cur.alpha, g);
    double pw = 0.0;
    for_cells(g, [&](int i, int j) {
      const Vec& v = cur.v(i, j);
      const EnergyValue ev = stored_energy_reg(cur.E(i, j), cur.alpha(i, j), m.eps_reg, m);
      double cell = 0.0;
      for (int a = 0; a < d; ++a) {
        double adv = 0.0;
        for (int b = 0; b < d; ++b) adv += v[b] * d_axis(cur.v, g, b, i, j)[a];
        const double pot = ev.dalpha * ga(i, j)[a] + ddot(S(i, j), gE(i, j)[a]);
        cell += v[a] * (m.rho * (v[a] - prev.v(i, j)[a]) / tau + m.rho * adv - pot +
                        m.kappa * la(i, j) * ga(i, j)[a]);
      }
      cell += ddot(ev.dE + isotropic_D_apply(kin.Eh(i, j), m.K_v, m.G_v), kin.Eh(i, j));
      cell += m.nu * std::pow(kin.Gn2(i, j), 0.5 * m.p_exp);
      cell += phth(i, j) * kin.divv(i, j);
      pw += cell;
    });
    ch.work_force = tau * pw * vol;
  } else {
    ch.work_force = tau * wf * vol;
  }

  // Entropy production: conduction across faces plus dissipative heating over temperature.
  if (theta_min > 1e-12) {
    for (int a = 0; a < d; ++a)
      for_cells(g, [&](int i, int j) {
        int ni, nj;
        if (!neighbour(g, p.bc, a, +1, i, j, ni, nj)) return;
        const double dth = cur.theta(ni, nj) - cur.theta(i, j);
        ent += lag.kface[a](i, j) * dth * dth / (g.h[a] * g.h[a] * cur.theta(i, j) * cur.theta(ni, nj));
      });
    const HeatSources src = heat_sources(cur, p, lag, xi, tau, cur.theta);
    for_cells(g, [&](int i, int j) { ent += src.dissipation(i, j) / cur.theta(i, j); });
    ch.entropy_production = tau * ent * vol;
  } else {
    ch.entropy_skipped = true;
  }
  for_cells(g, [&](int i, int j) {
    if (enthalpy_of(std::max(0.0, cur.theta(i, j)), cur.chi(i, j), m) < 0.0) rep.enthalpy_warning = true;
  });
  return {cur, rep};
}

AdvanceResult advance(const State& prev, double tau, const Problem& p, int max_halvings) {
  AdvanceResult out;
  State cur = prev;
  double remaining = tau;
  double sub = tau;
  int halvings = 0;
  while (remaining > 1e-14 * tau) {
    sub = std::min(sub, remaining);
    const double tmax = tau_max(cur, p);
    while (sub > tmax * (1.0 + 1e-12) && halvings < max_halvings) {
      sub *= 0.5;
      ++halvings;
    }
    try {
      StepResult r = step(cur, sub, p);
      cur = r.state;
      out.reports.push_back(r.report);
      out.history.push_back(cur);
      remaining -= sub;
    } catch (const NonconvergenceError&) {
      if (halvings >= max_halvings) throw;
      sub *= 0.5;
      ++halvings;
    }
  }
  out.state = cur;
  return out;
}

}  // namespace thermo
