#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <utility>

namespace thermo {

using Vec = std::array<double, 3>;

inline void check_dim(int d) {
  if (d < 1 || d > 3) throw std::invalid_argument("tensor dimension must be 1, 2 or 3");
}

/// Dense d x d tensor, row-major in a 3x3 buffer; unused slots stay zero.
struct Tensor2 {
  int d = 2;
  std::array<double, 9> a{};

  Tensor2() = default;
  explicit Tensor2(int dim) : d(dim) { check_dim(dim); }

  double& operator()(int i, int j) { return a[3 * i + j]; }
  double operator()(int i, int j) const { return a[3 * i + j]; }

  static Tensor2 identity(int dim);
  static Tensor2 zero(int dim) { return Tensor2(dim); }
};

/// Symmetric tensor in packed storage: d(d+1)/2 values, upper triangle row by row.
struct SymTensor2 {
  int d = 2;
  std::array<double, 6> p{};

  SymTensor2() = default;
  explicit SymTensor2(int dim) : d(dim) { check_dim(dim); }

  static constexpr int size(int dim) { return dim * (dim + 1) / 2; }
  static int index(int dim, int i, int j);

  double& operator()(int i, int j) { return p[index(d, i, j)]; }
  double operator()(int i, int j) const { return p[index(d, i, j)]; }

  int packed_size() const { return size(d); }
  Tensor2 full() const;

  static SymTensor2 identity(int dim);
  static SymTensor2 zero(int dim) { return SymTensor2(dim); }
  // Throws unless A is exactly symmetric.
  static SymTensor2 from_full(const Tensor2& A);
};

/// Symmetric trace-free tensor; construction projects onto the deviatoric subspace.
class DevTensor2 {
 public:
  DevTensor2() = default;
  explicit DevTensor2(int dim) : s_(dim) {}
  explicit DevTensor2(const SymTensor2& s);

  const SymTensor2& sym() const { return s_; }
  int dim() const { return s_.d; }
  double operator()(int i, int j) const { return s_(i, j); }

 private:
  SymTensor2 s_;
};

// Algebra.
Tensor2 operator+(const Tensor2& A, const Tensor2& B);
Tensor2 operator-(const Tensor2& A, const Tensor2& B);
Tensor2 operator*(double s, const Tensor2& A);
SymTensor2 operator+(const SymTensor2& A, const SymTensor2& B);
SymTensor2 operator-(const SymTensor2& A, const SymTensor2& B);
SymTensor2 operator*(double s, const SymTensor2& A);
SymTensor2& operator+=(SymTensor2& A, const SymTensor2& B);

Tensor2 matmul(const Tensor2& A, const Tensor2& B);
Tensor2 transpose(const Tensor2& A);
double trace(const Tensor2& A);
double trace(const SymTensor2& A);
double ddot(const Tensor2& A, const Tensor2& B);
double ddot(const SymTensor2& A, const SymTensor2& B);
double norm(const Tensor2& A);
double norm(const SymTensor2& A);
double norm2(const SymTensor2& A);

std::pair<SymTensor2, Tensor2> sym_skew(const Tensor2& A);
std::pair<Tensor2, Tensor2> sph_dev(const Tensor2& A);
SymTensor2 sph(const SymTensor2& A);
SymTensor2 dev(const SymTensor2& A);

/// A:(BC) = (B^T A):C = (A C^T):B within rel_tol.
bool triple_product_identity_check(const Tensor2& A, const Tensor2& B, const Tensor2& C,
                                   double rel_tol = 1e-12);

/// Corotational rotation part -W E + E W with W = skew(grad_v).
SymTensor2 corotation(const Tensor2& grad_v, const SymTensor2& E);

/// adv - skew(grad_v) E + E skew(grad_v).
SymTensor2 zj_rhs(const Tensor2& grad_v, const SymTensor2& adv, const SymTensor2& E);

/// (v . grad) E - skew(grad v) E + E skew(grad v); dE[c] is the derivative of E along axis c.
SymTensor2 bzj_operator(const Vec& v, const std::array<SymTensor2, 3>& dE, const Tensor2& grad_v,
                        const SymTensor2& E);

}  // namespace thermo
