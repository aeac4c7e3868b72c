#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "thermo/tensors.hpp"

namespace thermo {

struct Grid {
  int d = 2;
  std::array<int, 2> n{16, 1};
  std::array<double, 2> h{1.0 / 16, 1.0};
  static constexpr int ghost = 2;

  Grid() = default;
  Grid(int dim, std::array<int, 2> cells, std::array<double, 2> extent);

  int nx() const { return n[0]; }
  int ny() const { return d == 2 ? n[1] : 1; }
  int cells() const { return nx() * ny(); }
  double cell_volume() const { return d == 2 ? h[0] * h[1] : h[0]; }
  double face_area(int axis) const { return d == 2 ? h[1 - axis] : 1.0; }
  double center(int axis, int i) const { return (i + 0.5) * h[axis]; }
};

/// Cell data with a ghost layer of width Grid::ghost on every active axis.
template <class T>
class Field {
 public:
  Field() = default;
  Field(const Grid& g, const T& init) : nx_(g.nx()), ny_(g.ny()), two_d_(g.d == 2) {
    sx_ = nx_ + 2 * Grid::ghost;
    const int sy = two_d_ ? ny_ + 2 * Grid::ghost : 1;
    data_.assign(static_cast<std::size_t>(sx_) * sy, init);
  }

  T& operator()(int i, int j = 0) { return data_[offset(i, j)]; }
  const T& operator()(int i, int j = 0) const { return data_[offset(i, j)]; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  template <class F>
  void for_each_interior(F&& f) {
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) f(i, j, (*this)(i, j));
  }

 private:
  std::size_t offset(int i, int j) const {
    const int jj = two_d_ ? j + Grid::ghost : 0;
    return static_cast<std::size_t>(jj) * sx_ + (i + Grid::ghost);
  }
  int nx_ = 0, ny_ = 1, sx_ = 0;
  bool two_d_ = false;
  std::vector<T> data_;
};

using ScalarField = Field<double>;
using VecField = Field<Vec>;
using SymField = Field<SymTensor2>;
/// Derivatives of a symmetric tensor field along each axis.
using Grad3 = std::array<SymTensor2, 3>;
using Grad3Field = Field<Grad3>;

enum class AxisBC { periodic, wall };

/// Face heat flux into the domain: h0 * t^power (power > -1), averaged over each step.
struct FaceFlux {
  double h0 = 0.0;
  double power = 0.0;
  double average(double t0, double t1) const;
};

struct BoundarySpec {
  std::array<AxisBC, 2> axis{AxisBC::periodic, AxisBC::periodic};
  // Faces ordered x_lo, x_hi, y_lo, y_hi.
  std::array<FaceFlux, 4> heat{};

  /// Throws std::invalid_argument on inconsistent specs.
  void validate(const Grid& g) const;
};

/// Parse "periodic"/"wall" pairs; periodic against wall on the same axis is a config error.
AxisBC parse_axis_bc(const std::string& lo, const std::string& hi);

enum class Parity { even, mirror };

void fill_ghosts(ScalarField& f, const Grid& g, const BoundarySpec& bc);
void fill_ghosts(VecField& f, const Grid& g, const BoundarySpec& bc);
void fill_ghosts(SymField& f, const Grid& g, const BoundarySpec& bc, Parity parity);
void fill_ghosts(Grad3Field& f, const Grid& g, const BoundarySpec& bc);

// Centered operators on interior cells; inputs must have synced ghosts.
Tensor2 velocity_gradient(const VecField& v, const Grid& g, int i, int j);
SymField strain_rate(const VecField& v, const Grid& g);
ScalarField divergence(const VecField& v, const Grid& g);
VecField divergence(const SymField& T, const Grid& g);
VecField gradient(const ScalarField& s, const Grid& g);
Grad3Field gradient(const SymField& E, const Grid& g);
SymField divergence(const Grad3Field& H, const Grid& g);
ScalarField laplacian(const ScalarField& s, const Grid& g);
SymField laplacian(const SymField& s, const Grid& g);

double d_axis(const ScalarField& s, const Grid& g, int axis, int i, int j);
SymTensor2 d_axis(const SymField& s, const Grid& g, int axis, int i, int j);
Vec d_axis(const VecField& s, const Grid& g, int axis, int i, int j);

/// Conservative first-order upwind divergence of v*s; face velocity is the average of the two cells.
ScalarField upwind_scalar_flux_div(const VecField& v, const ScalarField& s, const Grid& g);
/// Non-conservative upwind (v . grad) s.
ScalarField upwind_advection(const VecField& v, const ScalarField& s, const Grid& g);

/// Face velocity between cell (i,j) and its + neighbour along axis.
double face_velocity(const VecField& v, int axis, int i, int j);

/// Sum over faces of |jump/h|^2 times the cell volume; wall faces carry no jump.
double face_gradient_energy(const ScalarField& s, const Grid& g, const BoundarySpec& bc);
double face_gradient_energy(const SymField& s, const Grid& g, const BoundarySpec& bc);
/// Per-cell split of the face sum: each face contributes half to both neighbours.
ScalarField face_gradient_density(const ScalarField& s, const Grid& g, const BoundarySpec& bc);
ScalarField face_gradient_density(const SymField& s, const Grid& g, const BoundarySpec& bc);

/// Ordered sum of interior values times the cell volume.
double integrate(const ScalarField& s, const Grid& g);

struct NamedScalar {
  std::string name;
  const ScalarField* field;
};
struct NamedVector {
  std::string name;
  const VecField* field;
};

/// Legacy VTK structured points, binary, big-endian doubles, cell data.
void write_vtk(const std::string& path, const Grid& g, const std::vector<NamedScalar>& scalars,
               const std::vector<NamedVector>& vectors, const std::string& title = "fields");
/// One row per cell: i, j, x, y, then the named scalars.
void write_cell_csv(const std::string& path, const Grid& g, const std::vector<NamedScalar>& scalars);

}  // namespace thermo
