#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "thermo/grid.hpp"

using namespace thermo;

namespace {

BoundarySpec bc_of(AxisBC a) {
  BoundarySpec bc;
  bc.axis = {a, a};
  return bc;
}

Grid grid2(int n = 8) { return Grid(2, {n, n}, {1.0, 1.0}); }

template <class F>
ScalarField scalar_of(const Grid& g, F&& f) {
  ScalarField s(g, 0.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) s(i, j) = f(g.center(0, i), g.d == 2 ? g.center(1, j) : 0.0);
  return s;
}

template <class F>
VecField vec_of(const Grid& g, F&& f) {
  VecField v(g, Vec{});
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) v(i, j) = f(g.center(0, i), g.d == 2 ? g.center(1, j) : 0.0);
  return v;
}

// Affine fields need exact ghost extrapolation, not a boundary reflection.
template <class F>
VecField affine_vec(const Grid& g, F&& f) {
  VecField v(g, Vec{});
  for (int j = -2; j < g.ny() + 2; ++j)
    for (int i = -2; i < g.nx() + 2; ++i) v(i, j) = f(g.center(0, i), g.center(1, j));
  return v;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(Grid(2, {3, 8}, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Grid(3, {8, 8}, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Grid(1, {8, 1}, {0.0, 1.0}), std::invalid_argument);
  const Grid g(1, {10, 7}, {2.0, 1.0});
  CHECK(g.ny() == 1);
  CHECK(g.h[0] == doctest::Approx(0.2));
}

TEST_CASE("strain rate of affine and rigid fields") {
  const Grid g = grid2();
  const VecField u = affine_vec(g, [](double, double) { return Vec{0.3, -0.2, 0.0}; });
  const SymField E0 = strain_rate(u, g);
  const VecField s = affine_vec(g, [](double x, double y) { return Vec{x, -y, 0.0}; });
  const SymField E1 = strain_rate(s, g);
  const VecField r = affine_vec(g, [](double x, double y) { return Vec{-2.0 * y, 2.0 * x, 0.0}; });
  const SymField E2 = strain_rate(r, g);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      CHECK(norm(E0(i, j)) == 0.0);
      CHECK(E1(i, j)(0, 0) == doctest::Approx(1.0));
      CHECK(E1(i, j)(1, 1) == doctest::Approx(-1.0));
      CHECK(E1(i, j)(0, 1) == doctest::Approx(0.0));
      CHECK(norm(E2(i, j)) < 1e-13);
    }
}

TEST_CASE("gradient of a linear field and laplacian symbol") {
  const Grid g(1, {32, 1}, {1.0, 1.0});
  ScalarField x(g, 0.0);
  for (int i = -2; i < 34; ++i) x(i) = g.center(0, i);
  const VecField gx = gradient(x, g);
  for (int i = 0; i < 32; ++i) CHECK(gx(i)[0] == doctest::Approx(1.0));

  const double k = 2.0 * M_PI * 3.0;
  ScalarField s = scalar_of(g, [&](double xx, double) { return std::sin(k * xx); });
  fill_ghosts(s, g, bc_of(AxisBC::periodic));
  const ScalarField L = laplacian(s, g);
  const double h = g.h[0];
  const double sym = 2.0 * (1.0 - std::cos(k * h)) / (h * h);
  for (int i = 0; i < 32; ++i) CHECK(L(i) == doctest::Approx(-sym * s(i)).epsilon(1e-10));

  ScalarField c(g, 2.5);
  fill_ghosts(c, g, bc_of(AxisBC::wall));
  const ScalarField Lc = laplacian(c, g);
  for (int i = 0; i < 32; ++i) CHECK(Lc(i) == 0.0);
}

TEST_CASE("upwind flux divergence is conservative on periodic boxes") {
  const Grid g = grid2(12);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VecField v(g, Vec{});
  ScalarField s(g, 0.0);
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) {
      v(i, j) = {u(rng), u(rng), 0.0};
      s(i, j) = u(rng);
    }
  const BoundarySpec bc = bc_of(AxisBC::periodic);
  fill_ghosts(v, g, bc);
  fill_ghosts(s, g, bc);
  const ScalarField div = upwind_scalar_flux_div(v, s, g);
  double sum = 0.0, mag = 0.0;
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) {
      sum += div(i, j);
      mag += std::abs(div(i, j));
    }
  CHECK(std::abs(sum) <= 1e-13 * mag);

  VecField z(g, Vec{});
  const ScalarField d0 = upwind_scalar_flux_div(z, s, g);
  ScalarField one(g, 1.0);
  VecField uni(g, Vec{0.4, -0.7, 0.0});
  const ScalarField d1 = upwind_scalar_flux_div(uni, one, g);
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) {
      CHECK(d0(i, j) == 0.0);
      CHECK(d1(i, j) == doctest::Approx(0.0));
    }
}

TEST_CASE("wall reflections") {
  const Grid g = grid2(6);
  const BoundarySpec bc = bc_of(AxisBC::wall);
  VecField v = vec_of(g, [](double x, double y) { return Vec{1.0 + x, 2.0 + y, 0.0}; });
  fill_ghosts(v, g, bc);
  for (int j = 0; j < 6; ++j) {
    CHECK(face_velocity(v, 0, -1, j) == 0.0);
    CHECK(face_velocity(v, 0, 5, j) == 0.0);
    CHECK(v(-1, j)[1] == v(0, j)[1]);
  }
  ScalarField a = scalar_of(g, [](double x, double) { return 3.0 * x; });
  fill_ghosts(a, g, bc);
  for (int j = 0; j < 6; ++j) {
    CHECK(a(-1, j) == a(0, j));
    CHECK(a(-2, j) == a(1, j));
    CHECK(a(6, j) - a(5, j) == 0.0);
  }
  ScalarField t(g, 1.25);
  fill_ghosts(t, g, bc);
  CHECK(t(-2, -2) == 1.25);
  CHECK(t(7, 7) == 1.25);
  CHECK_THROWS_AS(parse_axis_bc("periodic", "wall"), std::invalid_argument);
  CHECK(parse_axis_bc("wall", "wall") == AxisBC::wall);
}

TEST_CASE("summation by parts holds exactly with mirror ghosts") {
  for (AxisBC kind : {AxisBC::wall, AxisBC::periodic}) {
    const Grid g = grid2(10);
    const BoundarySpec bc = bc_of(kind);
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VecField v(g, Vec{});
    ScalarField s(g, 0.0);
    SymField T(g, SymTensor2(2));
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) {
        v(i, j) = {u(rng), u(rng), 0.0};
        s(i, j) = u(rng);
        T(i, j)(0, 0) = u(rng);
        T(i, j)(0, 1) = u(rng);
        T(i, j)(1, 1) = u(rng);
      }
    fill_ghosts(v, g, bc);
    fill_ghosts(s, g, bc);
    fill_ghosts(T, g, bc, Parity::mirror);
    const ScalarField dv = divergence(v, g);
    const VecField gs = gradient(s, g);
    const VecField dT = divergence(T, g);
    const SymField Ev = strain_rate(v, g);
    double a = 0.0, b = 0.0, mag = 0.0;
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) {
        a += s(i, j) * dv(i, j) + gs(i, j)[0] * v(i, j)[0] + gs(i, j)[1] * v(i, j)[1];
        b += dT(i, j)[0] * v(i, j)[0] + dT(i, j)[1] * v(i, j)[1] + ddot(T(i, j), Ev(i, j));
        mag += std::abs(ddot(T(i, j), Ev(i, j)));
      }
    CHECK(std::abs(a) < 1e-12);
    CHECK(std::abs(b) < 1e-12 * std::max(1.0, mag));
  }
}

TEST_CASE("face gradient energy pairs with the compact laplacian") {
  for (AxisBC kind : {AxisBC::wall, AxisBC::periodic}) {
    const Grid g(2, {9, 7}, {1.0, 0.8});
    const BoundarySpec bc = bc_of(kind);
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ScalarField s(g, 0.0);
    for (int j = 0; j < 7; ++j)
      for (int i = 0; i < 9; ++i) s(i, j) = u(rng);
    fill_ghosts(s, g, bc);
    const ScalarField L = laplacian(s, g);
    double pair = 0.0;
    for (int j = 0; j < 7; ++j)
      for (int i = 0; i < 9; ++i) pair -= s(i, j) * L(i, j);
    pair *= g.cell_volume();
    const double e = face_gradient_energy(s, g, bc);
    CHECK(e == doctest::Approx(pair).epsilon(1e-12));
    CHECK(integrate(face_gradient_density(s, g, bc), g) == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("heat flux averaging") {
  FaceFlux f{2.0, 0.0};
  CHECK(f.average(0.0, 1.0) == 2.0);
  FaceFlux r{1.0, -0.5};
  // Mean of t^{-1/2} over [1,4] is 2(2-1)/3.
  CHECK(r.average(1.0, 4.0) == doctest::Approx(2.0 / 3.0));
  BoundarySpec bc;
  bc.heat[0] = FaceFlux{1.0, 0.0};
  CHECK_THROWS_AS(bc.validate(grid2()), std::invalid_argument);
  bc.axis = {AxisBC::wall, AxisBC::wall};
  CHECK_NOTHROW(bc.validate(grid2()));
  bc.heat[1] = FaceFlux{-1.0, 0.0};
  CHECK_THROWS_AS(bc.validate(grid2()), std::invalid_argument);
}

TEST_CASE("legacy VTK output is big-endian binary") {
  const Grid g(2, {4, 5}, {1.0, 1.0});
  ScalarField s(g, 0.0);
  s(1, 2) = 1.5;
  VecField v(g, Vec{0.25, -1.0, 0.0});
  const auto path = std::filesystem::temp_directory_path() / "thermo_grid_test.vtk";
  write_vtk(path.string(), g, {{"theta", &s}}, {{"velocity", &v}}, "t");
  std::ifstream is(path, std::ios::binary);
  std::string line;
  std::getline(is, line);
  CHECK(line == "# vtk DataFile Version 3.0");
  std::getline(is, line);
  std::getline(is, line);
  CHECK(line == "BINARY");
  std::getline(is, line);
  CHECK(line == "DATASET STRUCTURED_POINTS");
  std::getline(is, line);
  CHECK(line == "DIMENSIONS 5 6 1");
  std::getline(is, line);
  std::getline(is, line);
  std::getline(is, line);
  CHECK(line == "CELL_DATA 20");
  std::getline(is, line);
  CHECK(line == "SCALARS theta double 1");
  std::getline(is, line);
  std::array<unsigned char, 8 * 20> raw{};
  is.read(reinterpret_cast<char*>(raw.data()), raw.size());
  // Cell (1,2) is the 11th value; 1.5 = 0x3FF8000000000000.
  CHECK(raw[8 * 9] == 0x3F);
  CHECK(raw[8 * 9 + 1] == 0xF8);
  CHECK(raw[8 * 9 + 7] == 0x00);
  std::filesystem::remove(path);
}
