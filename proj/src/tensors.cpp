#include "thermo/tensors.hpp"

#include <algorithm>
#include <cmath>

namespace thermo {

Tensor2 Tensor2::identity(int dim) {
  Tensor2 I(dim);
  for (int i = 0; i < dim; ++i) I(i, i) = 1.0;
  return I;
}

int SymTensor2::index(int dim, int i, int j) {
  if (i > j) std::swap(i, j);
  // Row i of the upper triangle starts after i rows of decreasing length.
  return i * dim - i * (i - 1) / 2 + (j - i);
}

Tensor2 SymTensor2::full() const {
  Tensor2 A(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = (*this)(i, j);
  return A;
}

SymTensor2 SymTensor2::identity(int dim) {
  SymTensor2 I(dim);
  for (int i = 0; i < dim; ++i) I(i, i) = 1.0;
  return I;
}

SymTensor2 SymTensor2::from_full(const Tensor2& A) {
  SymTensor2 S(A.d);
  for (int i = 0; i < A.d; ++i)
    for (int j = i; j < A.d; ++j) {
      if (A(i, j) != A(j, i)) throw std::invalid_argument("tensor is not symmetric");
      S(i, j) = A(i, j);
    }
  return S;
}

DevTensor2::DevTensor2(const SymTensor2& s) : s_(dev(s)) {
  const double tr = trace(s_);
  if (std::abs(tr) > 1e-14 * std::max(1.0, norm(s_)))
    throw std::logic_error("deviatoric projection left a trace");
}

Tensor2 operator+(const Tensor2& A, const Tensor2& B) {
  Tensor2 C(A.d);
  for (int k = 0; k < 9; ++k) C.a[k] = A.a[k] + B.a[k];
  return C;
}

Tensor2 operator-(const Tensor2& A, const Tensor2& B) {
  Tensor2 C(A.d);
  for (int k = 0; k < 9; ++k) C.a[k] = A.a[k] - B.a[k];
  return C;
}

Tensor2 operator*(double s, const Tensor2& A) {
  Tensor2 C(A.d);
  for (int k = 0; k < 9; ++k) C.a[k] = s * A.a[k];
  return C;
}

SymTensor2 operator+(const SymTensor2& A, const SymTensor2& B) {
  SymTensor2 C(A.d);
  for (int k = 0; k < 6; ++k) C.p[k] = A.p[k] + B.p[k];
  return C;
}

SymTensor2 operator-(const SymTensor2& A, const SymTensor2& B) {
  SymTensor2 C(A.d);
  for (int k = 0; k < 6; ++k) C.p[k] = A.p[k] - B.p[k];
  return C;
}

SymTensor2 operator*(double s, const SymTensor2& A) {
  SymTensor2 C(A.d);
  for (int k = 0; k < 6; ++k) C.p[k] = s * A.p[k];
  return C;
}

SymTensor2& operator+=(SymTensor2& A, const SymTensor2& B) {
  for (int k = 0; k < 6; ++k) A.p[k] += B.p[k];
  return A;
}

Tensor2 matmul(const Tensor2& A, const Tensor2& B) {
  Tensor2 C(A.d);
  for (int i = 0; i < A.d; ++i)
    for (int j = 0; j < A.d; ++j) {
      double s = 0.0;
      for (int k = 0; k < A.d; ++k) s += A(i, k) * B(k, j);
      C(i, j) = s;
    }
  return C;
}

Tensor2 transpose(const Tensor2& A) {
  Tensor2 C(A.d);
  for (int i = 0; i < A.d; ++i)
    for (int j = 0; j < A.d; ++j) C(i, j) = A(j, i);
  return C;
}

double trace(const Tensor2& A) {
  double s = 0.0;
  for (int i = 0; i < A.d; ++i) s += A(i, i);
  return s;
}

double trace(const SymTensor2& A) {
  double s = 0.0;
  for (int i = 0; i < A.d; ++i) s += A(i, i);
  return s;
}

double ddot(const Tensor2& A, const Tensor2& B) {
  double s = 0.0;
  for (int i = 0; i < A.d; ++i)
    for (int j = 0; j < A.d; ++j) s += A(i, j) * B(i, j);
  return s;
}

double ddot(const SymTensor2& A, const SymTensor2& B) {
  double s = 0.0;
  for (int i = 0; i < A.d; ++i) {
    s += A(i, i) * B(i, i);
    for (int j = i + 1; j < A.d; ++j) s += 2.0 * A(i, j) * B(i, j);
  }
  return s;
}

double norm(const Tensor2& A) { return std::sqrt(ddot(A, A)); }
double norm2(const SymTensor2& A) { return ddot(A, A); }
double norm(const SymTensor2& A) { return std::sqrt(ddot(A, A)); }

std::pair<SymTensor2, Tensor2> sym_skew(const Tensor2& A) {
  SymTensor2 S(A.d);
  Tensor2 W(A.d);
  for (int i = 0; i < A.d; ++i)
    for (int j = 0; j < A.d; ++j) {
      if (j >= i) S(i, j) = 0.5 * (A(i, j) + A(j, i));
      W(i, j) = 0.5 * (A(i, j) - A(j, i));
    }
  return {S, W};
}

std::pair<Tensor2, Tensor2> sph_dev(const Tensor2& A) {
  const double m = trace(A) / A.d;
  Tensor2 S = m * Tensor2::identity(A.d);
  return {S, A - S};
}

SymTensor2 sph(const SymTensor2& A) { return (trace(A) / A.d) * SymTensor2::identity(A.d); }

SymTensor2 dev(const SymTensor2& A) {
  SymTensor2 D = A;
  const double m = trace(A) / A.d;
  for (int i = 0; i < A.d; ++i) D(i, i) -= m;
  return D;
}

bool triple_product_identity_check(const Tensor2& A, const Tensor2& B, const Tensor2& C,
                                   double rel_tol) {
  const double x = ddot(A, matmul(B, C));
  const double y = ddot(matmul(transpose(B), A), C);
  const double z = ddot(matmul(A, transpose(C)), B);
  const double scale = std::max(1e-300, norm(A) * norm(B) * norm(C));
  return std::abs(x - y) <= rel_tol * scale && std::abs(x - z) <= rel_tol * scale;
}

SymTensor2 corotation(const Tensor2& grad_v, const SymTensor2& E) {
  const int d = E.d;
  SymTensor2 R(d);
  // W_ik = (L_ik - L_ki)/2; (-W E + E W)_ij = sum_k (-W_ik E_kj + E_ik W_kj).
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double Wik = 0.5 * (grad_v(i, k) - grad_v(k, i));
        const double Wkj = 0.5 * (grad_v(k, j) - grad_v(j, k));
        s += -Wik * E(k, j) + E(i, k) * Wkj;
      }
      R(i, j) = s;
    }
  return R;
}

SymTensor2 zj_rhs(const Tensor2& grad_v, const SymTensor2& adv, const SymTensor2& E) {
  return adv + corotation(grad_v, E);
}

SymTensor2 bzj_operator(const Vec& v, const std::array<SymTensor2, 3>& dE, const Tensor2& grad_v,
                        const SymTensor2& E) {
  SymTensor2 adv(E.d);
  for (int c = 0; c < E.d; ++c) adv += v[c] * dE[c];
  return zj_rhs(grad_v, adv, E);
}

}  // namespace thermo
