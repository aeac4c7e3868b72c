#include "thermo/grid.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace thermo {

Grid::Grid(int dim, std::array<int, 2> cells, std::array<double, 2> extent) : d(dim), n(cells) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
  if (dim == 1) n[1] = 1;
  for (int a = 0; a < dim; ++a) {
    if (n[a] < 4) throw std::invalid_argument("grid needs at least 4 cells per axis");
    if (!(extent[a] > 0)) throw std::invalid_argument("grid extent must be positive");
    h[a] = extent[a] / n[a];
  }
  if (dim == 1) h[1] = 1.0;
}

double FaceFlux::average(double t0, double t1) const {
  if (h0 == 0.0) return 0.0;
  if (power == 0.0) return h0;
  const double q = power + 1.0;
  return h0 * (std::pow(t1, q) - std::pow(t0, q)) / (q * (t1 - t0));
}

void BoundarySpec::validate(const Grid& g) const {
  for (const auto& f : heat) {
    if (f.h0 < 0) throw std::invalid_argument("heat flux must be nonnegative");
    if (!(f.power > -1.0)) throw std::invalid_argument("heat flux time exponent must exceed -1");
  }
  for (int a = 0; a < g.d; ++a)
    if (axis[a] == AxisBC::periodic && (heat[2 * a].h0 != 0 || heat[2 * a + 1].h0 != 0))
      throw std::invalid_argument("heat flux prescribed on a periodic face");
}

AxisBC parse_axis_bc(const std::string& lo, const std::string& hi) {
  auto kind = [](const std::string& s) {
    if (s == "periodic") return AxisBC::periodic;
    if (s == "wall") return AxisBC::wall;
    throw std::invalid_argument("unknown boundary kind '" + s + "'");
  };
  const AxisBC a = kind(lo), b = kind(hi);
  if (a != b) throw std::invalid_argument("periodic face paired with a wall on the opposite side");
  return a;
}

namespace {

double reflect(double s, int) { return s; }

Vec reflect(Vec v, int axis) {
  v[axis] = -v[axis];
  return v;
}

SymTensor2 reflect_mirror(SymTensor2 t, int axis) {
  for (int a = 0; a < t.d; ++a)
    for (int b = a; b < t.d; ++b)
      if ((a == axis) != (b == axis)) t(a, b) = -t(a, b);
  return t;
}

Grad3 reflect(Grad3 G, int axis) {
  for (int c = 0; c < 3; ++c) {
    G[c] = reflect_mirror(G[c], axis);
    if (c == axis) G[c] = -1.0 * G[c];
  }
  return G;
}

template <class T, class R>
void fill_generic(Field<T>& f, const Grid& g, const BoundarySpec& bc, R&& refl) {
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j)
    for (int k = 1; k <= Grid::ghost; ++k) {
      if (bc.axis[0] == AxisBC::periodic) {
        f(-k, j) = f(nx - k, j);
        f(nx - 1 + k, j) = f(k - 1, j);
      } else {
        f(-k, j) = refl(f(k - 1, j), 0);
        f(nx - 1 + k, j) = refl(f(nx - k, j), 0);
      }
    }
  if (g.d < 2) return;
  for (int i = -Grid::ghost; i < nx + Grid::ghost; ++i)
    for (int k = 1; k <= Grid::ghost; ++k) {
      if (bc.axis[1] == AxisBC::periodic) {
        f(i, -k) = f(i, ny - k);
        f(i, ny - 1 + k) = f(i, k - 1);
      } else {
        f(i, -k) = refl(f(i, k - 1), 1);
        f(i, ny - 1 + k) = refl(f(i, ny - k), 1);
      }
    }
}

inline std::pair<int, int> shift(int axis, int i, int j, int s) {
  return axis == 0 ? std::pair{i + s, j} : std::pair{i, j + s};
}

}  // namespace

void fill_ghosts(ScalarField& f, const Grid& g, const BoundarySpec& bc) {
  fill_generic(f, g, bc, [](double s, int a) { return reflect(s, a); });
}

void fill_ghosts(VecField& f, const Grid& g, const BoundarySpec& bc) {
  fill_generic(f, g, bc, [](const Vec& v, int a) { return reflect(v, a); });
}

void fill_ghosts(SymField& f, const Grid& g, const BoundarySpec& bc, Parity parity) {
  if (parity == Parity::even)
    fill_generic(f, g, bc, [](const SymTensor2& t, int) { return t; });
  else
    fill_generic(f, g, bc, [](const SymTensor2& t, int a) { return reflect_mirror(t, a); });
}

void fill_ghosts(Grad3Field& f, const Grid& g, const BoundarySpec& bc) {
  fill_generic(f, g, bc, [](const Grad3& G, int a) { return reflect(G, a); });
}

double d_axis(const ScalarField& s, const Grid& g, int axis, int i, int j) {
  auto [ip, jp] = shift(axis, i, j, 1);
  auto [im, jm] = shift(axis, i, j, -1);
  return (s(ip, jp) - s(im, jm)) / (2.0 * g.h[axis]);
}

SymTensor2 d_axis(const SymField& s, const Grid& g, int axis, int i, int j) {
  auto [ip, jp] = shift(axis, i, j, 1);
  auto [im, jm] = shift(axis, i, j, -1);
  return (1.0 / (2.0 * g.h[axis])) * (s(ip, jp) - s(im, jm));
}

Vec d_axis(const VecField& s, const Grid& g, int axis, int i, int j) {
  auto [ip, jp] = shift(axis, i, j, 1);
  auto [im, jm] = shift(axis, i, j, -1);
  Vec out{};
  for (int a = 0; a < 3; ++a) out[a] = (s(ip, jp)[a] - s(im, jm)[a]) / (2.0 * g.h[axis]);
  return out;
}

Tensor2 velocity_gradient(const VecField& v, const Grid& g, int i, int j) {
  Tensor2 L(g.d);
  for (int b = 0; b < g.d; ++b) {
    const Vec dv = d_axis(v, g, b, i, j);
    for (int a = 0; a < g.d; ++a) L(a, b) = dv[a];
  }
  return L;
}

SymField strain_rate(const VecField& v, const Grid& g) {
  SymField E(g, SymTensor2(g.d));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) E(i, j) = sym_skew(velocity_gradient(v, g, i, j)).first;
  return E;
}

ScalarField divergence(const VecField& v, const Grid& g) {
  ScalarField out(g, 0.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double s = 0.0;
      for (int a = 0; a < g.d; ++a) s += d_axis(v, g, a, i, j)[a];
      out(i, j) = s;
    }
  return out;
}

VecField divergence(const SymField& T, const Grid& g) {
  VecField out(g, Vec{});
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      Vec s{};
      for (int b = 0; b < g.d; ++b) {
        const SymTensor2 dT = d_axis(T, g, b, i, j);
        for (int a = 0; a < g.d; ++a) s[a] += dT(a, b);
      }
      out(i, j) = s;
    }
  return out;
}

VecField gradient(const ScalarField& s, const Grid& g) {
  VecField out(g, Vec{});
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      for (int a = 0; a < g.d; ++a) out(i, j)[a] = d_axis(s, g, a, i, j);
  return out;
}

Grad3Field gradient(const SymField& E, const Grid& g) {
  Grad3 zero{};
  for (int c = 0; c < 3; ++c) zero[c] = SymTensor2(g.d);
  Grad3Field out(g, zero);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      for (int c = 0; c < g.d; ++c) out(i, j)[c] = d_axis(E, g, c, i, j);
  return out;
}

SymField divergence(const Grad3Field& H, const Grid& g) {
  SymField out(g, SymTensor2(g.d));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      SymTensor2 s(g.d);
      for (int c = 0; c < g.d; ++c) {
        auto [ip, jp] = shift(c, i, j, 1);
        auto [im, jm] = shift(c, i, j, -1);
        s += (1.0 / (2.0 * g.h[c])) * (H(ip, jp)[c] - H(im, jm)[c]);
      }
      out(i, j) = s;
    }
  return out;
}

ScalarField laplacian(const ScalarField& s, const Grid& g) {
  ScalarField out(g, 0.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double acc = 0.0;
      for (int a = 0; a < g.d; ++a) {
        auto [ip, jp] = shift(a, i, j, 1);
        auto [im, jm] = shift(a, i, j, -1);
        acc += (s(ip, jp) - 2.0 * s(i, j) + s(im, jm)) / (g.h[a] * g.h[a]);
      }
      out(i, j) = acc;
    }
  return out;
}

SymField laplacian(const SymField& s, const Grid& g) {
  SymField out(g, SymTensor2(g.d));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      SymTensor2 acc(g.d);
      for (int a = 0; a < g.d; ++a) {
        auto [ip, jp] = shift(a, i, j, 1);
        auto [im, jm] = shift(a, i, j, -1);
        acc += (1.0 / (g.h[a] * g.h[a])) * (s(ip, jp) - 2.0 * s(i, j) + s(im, jm));
      }
      out(i, j) = acc;
    }
  return out;
}

double face_velocity(const VecField& v, int axis, int i, int j) {
  auto [ip, jp] = shift(axis, i, j, 1);
  return 0.5 * (v(i, j)[axis] + v(ip, jp)[axis]);
}

ScalarField upwind_scalar_flux_div(const VecField& v, const ScalarField& s, const Grid& g) {
  ScalarField out(g, 0.0);
  const int nx = g.nx(), ny = g.ny();
  for (int a = 0; a < g.d; ++a) {
    const int na = a == 0 ? nx : ny;
    const int nb = a == 0 ? ny : nx;
    std::vector<double> flux(static_cast<std::size_t>(na) + 1);
    for (int b = 0; b < nb; ++b) {
      // Face k sits between cells k-1 and k along axis a.
      for (int k = 0; k <= na; ++k) {
        const int i = a == 0 ? k - 1 : b, j = a == 0 ? b : k - 1;
        auto [ip, jp] = shift(a, i, j, 1);
        const double u = face_velocity(v, a, i, j);
        flux[k] = u * (u > 0 ? s(i, j) : s(ip, jp));
      }
      for (int k = 0; k < na; ++k) {
        const int i = a == 0 ? k : b, j = a == 0 ? b : k;
        out(i, j) += (flux[k + 1] - flux[k]) / g.h[a];
      }
    }
  }
  return out;
}

ScalarField upwind_advection(const VecField& v, const ScalarField& s, const Grid& g) {
  ScalarField out(g, 0.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double acc = 0.0;
      for (int a = 0; a < g.d; ++a) {
        const double u = v(i, j)[a];
        auto [ip, jp] = shift(a, i, j, 1);
        auto [im, jm] = shift(a, i, j, -1);
        const double ds = u > 0 ? s(i, j) - s(im, jm) : s(ip, jp) - s(i, j);
        acc += u * ds / g.h[a];
      }
      out(i, j) = acc;
    }
  return out;
}

namespace {

double jump2(double a, double b) { return (b - a) * (b - a); }
double jump2(const SymTensor2& a, const SymTensor2& b) { return norm2(b - a); }

// Visits every interior face once: f(i0, j0, i1, j1, axis). Periodic wrap faces included.
template <class F>
void for_each_face(const Grid& g, const BoundarySpec& bc, F&& f) {
  const int nx = g.nx(), ny = g.ny();
  for (int a = 0; a < g.d; ++a) {
    const int na = a == 0 ? nx : ny;
    const int nb = a == 0 ? ny : nx;
    const int last = bc.axis[a] == AxisBC::periodic ? na : na - 1;
    for (int b = 0; b < nb; ++b)
      for (int k = 0; k < last; ++k) {
        const int k1 = (k + 1) % na;
        if (a == 0)
          f(k, b, k1, b, a);
        else
          f(b, k, b, k1, a);
      }
  }
}

template <class T>
double face_energy_impl(const Field<T>& s, const Grid& g, const BoundarySpec& bc) {
  double acc = 0.0;
  for_each_face(g, bc, [&](int i0, int j0, int i1, int j1, int a) {
    acc += jump2(s(i0, j0), s(i1, j1)) / (g.h[a] * g.h[a]);
  });
  return acc * g.cell_volume();
}

template <class T>
ScalarField face_density_impl(const Field<T>& s, const Grid& g, const BoundarySpec& bc) {
  ScalarField out(g, 0.0);
  for_each_face(g, bc, [&](int i0, int j0, int i1, int j1, int a) {
    const double e = 0.5 * jump2(s(i0, j0), s(i1, j1)) / (g.h[a] * g.h[a]);
    out(i0, j0) += e;
    out(i1, j1) += e;
  });
  return out;
}

void put_be(std::ostream& os, double x) {
  auto u = std::bit_cast<std::uint64_t>(x);
  if constexpr (std::endian::native == std::endian::little) u = __builtin_bswap64(u);
  os.write(reinterpret_cast<const char*>(&u), sizeof u);
}

}  // namespace

double face_gradient_energy(const ScalarField& s, const Grid& g, const BoundarySpec& bc) {
  return face_energy_impl(s, g, bc);
}
double face_gradient_energy(const SymField& s, const Grid& g, const BoundarySpec& bc) {
  return face_energy_impl(s, g, bc);
}
ScalarField face_gradient_density(const ScalarField& s, const Grid& g, const BoundarySpec& bc) {
  return face_density_impl(s, g, bc);
}
ScalarField face_gradient_density(const SymField& s, const Grid& g, const BoundarySpec& bc) {
  return face_density_impl(s, g, bc);
}

double integrate(const ScalarField& s, const Grid& g) {
  double acc = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) acc += s(i, j);
  return acc * g.cell_volume();
}

void write_vtk(const std::string& path, const Grid& g, const std::vector<NamedScalar>& scalars,
               const std::vector<NamedVector>& vectors, const std::string& title) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  const int nx = g.nx(), ny = g.ny();
  std::ostringstream hdr;
  hdr << std::setprecision(17);
  hdr << "# vtk DataFile Version 3.0\n" << title << "\nBINARY\nDATASET STRUCTURED_POINTS\n";
  hdr << "DIMENSIONS " << nx + 1 << ' ' << (g.d == 2 ? ny + 1 : 2) << " 1\n";
  hdr << "ORIGIN 0 0 0\n";
  hdr << "SPACING " << g.h[0] << ' ' << (g.d == 2 ? g.h[1] : 1.0) << " 1\n";
  hdr << "CELL_DATA " << nx * ny << '\n';
  os << hdr.str();
  for (const auto& s : scalars) {
    os << "SCALARS " << s.name << " double 1\nLOOKUP_TABLE default\n";
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) put_be(os, (*s.field)(i, j));
    os << '\n';
  }
  for (const auto& v : vectors) {
    os << "VECTORS " << v.name << " double\n";
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        for (int c = 0; c < 3; ++c) put_be(os, (*v.field)(i, j)[c]);
    os << '\n';
  }
}

void write_cell_csv(const std::string& path, const Grid& g, const std::vector<NamedScalar>& scalars) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "i,j,x,y";
  for (const auto& s : scalars) os << ',' << s.name;
  os << '\n' << std::setprecision(17);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      os << i << ',' << j << ',' << g.center(0, i) << ',' << (g.d == 2 ? g.center(1, j) : 0.0);
      for (const auto& s : scalars) os << ',' << (*s.field)(i, j);
      os << '\n';
    }
}

}  // namespace thermo
