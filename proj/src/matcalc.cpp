#include "rvb/matcalc.hpp"

#include <cmath>
#include <string>

#include "rvb/error.hpp"

namespace rvb::matcalc {
namespace {

void check_length(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw LengthMismatch(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

void check_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) throw LengthMismatch(std::string(what) + ": matrix is not square");
}

}  // namespace

int order_from_half_size(int len) {
  int r = 0;
  while (half_size(r) < len) ++r;
  if (half_size(r) != len) {
    throw LengthMismatch("length " + std::to_string(len) + " is not r(r+1)/2 for any r");
  }
  return r;
}

Vector vec(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

Matrix unvec(const Vector& x, int r) {
  check_length(x.size(), static_cast<Eigen::Index>(r) * r, "unvec");
  return Eigen::Map<const Matrix>(x.data(), r, r);
}

Vector halfvec(const Matrix& a) {
  check_square(a, "halfvec");
  const int r = static_cast<int>(a.rows());
  Vector h(half_size(r));
  int k = 0;
  for (int c = 0; c < r; ++c)
    for (int i = c; i < r; ++i) h(k++) = a(i, c);
  return h;
}

Matrix lower_from_halfvec(const Vector& h, int r) {
  check_length(h.size(), half_size(r), "lower_from_halfvec");
  Matrix a = Matrix::Zero(r, r);
  int k = 0;
  for (int c = 0; c < r; ++c)
    for (int i = c; i < r; ++i) a(i, c) = h(k++);
  return a;
}

Vector elim_apply(const Vector& x, int r) {
  check_length(x.size(), static_cast<Eigen::Index>(r) * r, "elim_apply");
  Vector h(half_size(r));
  int k = 0;
  for (int c = 0; c < r; ++c)
    for (int i = c; i < r; ++i) h(k++) = x(c * r + i);
  return h;
}

Vector elim_transpose_apply(const Vector& h, int r) {
  check_length(h.size(), half_size(r), "elim_transpose_apply");
  Vector x = Vector::Zero(static_cast<Eigen::Index>(r) * r);
  int k = 0;
  for (int c = 0; c < r; ++c)
    for (int i = c; i < r; ++i) x(c * r + i) = h(k++);
  return x;
}

Vector dup_apply(const Vector& h, int r) {
  check_length(h.size(), half_size(r), "dup_apply");
  Vector x(static_cast<Eigen::Index>(r) * r);
  for (int c = 0; c < r; ++c) {
    for (int i = 0; i < r; ++i) {
      x(c * r + i) = i >= c ? h(half_index(i, c, r)) : h(half_index(c, i, r));
    }
  }
  return x;
}

Vector comm_apply(const Vector& x, int r) {
  check_length(x.size(), static_cast<Eigen::Index>(r) * r, "comm_apply");
  Vector y(x.size());
  for (int c = 0; c < r; ++c)
    for (int i = 0; i < r; ++i) y(c * r + i) = x(i * r + c);
  return y;
}

Vector sym_apply(const Vector& x, int r) { return 0.5 * (comm_apply(x, r) + x); }

Matrix dg(const Matrix& a) {
  check_square(a, "dg");
  return a.diagonal().asDiagonal();
}

Matrix tri_lower(const Matrix& a) {
  check_square(a, "tri_lower");
  return a.triangularView<Eigen::Lower>();
}

Matrix k_op(const Matrix& a) {
  Matrix k = tri_lower(a);
  k.diagonal() *= 0.5;
  return k;
}

Matrix cholesky(const Matrix& s) {
  check_square(s, "cholesky");
  const Eigen::Index r = s.rows();
  const Matrix sym = 0.5 * (s + s.transpose());
  Matrix l = Matrix::Zero(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    double pivot = sym(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      throw NotPositiveDefinite("leading minor " + std::to_string(j + 1) +
                                " is not positive");
    }
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (Eigen::Index i = j + 1; i < r; ++i) {
      double v = sym(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / d;
    }
  }
  return l;
}

Matrix chol_diff(const Matrix& l, const Matrix& ds) {
  check_square(l, "chol_diff");
  if (ds.rows() != l.rows() || ds.cols() != l.cols()) {
    throw LengthMismatch("chol_diff: dS and L differ in order");
  }
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (l(i, i) == 0.0) throw SingularMatrix("chol_diff: singular Cholesky factor");
  }
  const auto lo = l.triangularView<Eigen::Lower>();
  // A = L^{-1} dS L^{-T}
  const Matrix left = lo.solve(ds);
  const Matrix a = lo.solve(left.transpose()).transpose();
  return l * k_op(a);
}

Vector dweight(const Matrix& m) {
  check_square(m, "dweight");
  const int r = static_cast<int>(m.rows());
  Vector w = Vector::Ones(half_size(r));
  for (int i = 0; i < r; ++i) w(half_index(i, i, r)) = m(i, i);
  return w;
}

Vector lower_solve(const Matrix& l, const Vector& b) {
  return l.triangularView<Eigen::Lower>().solve(b);
}

Vector lower_transpose_solve(const Matrix& l, const Vector& b) {
  return l.triangularView<Eigen::Lower>().transpose().solve(b);
}

Matrix spd_inverse(const Matrix& s) {
  const Matrix l = cholesky(s);
  const auto lo = l.triangularView<Eigen::Lower>();
  Matrix linv = lo.solve(Matrix::Identity(s.rows(), s.cols()));
  return linv.transpose() * linv;
}

Vector pack_log_diag(const Matrix& lower) {
  Vector h = halfvec(lower);
  const int r = static_cast<int>(lower.rows());
  for (int i = 0; i < r; ++i) h(half_index(i, i, r)) = std::log(lower(i, i));
  return h;
}

Matrix unpack_log_diag(const Vector& packed, int r) {
  Matrix l = lower_from_halfvec(packed, r);
  for (int i = 0; i < r; ++i) l(i, i) = std::exp(l(i, i));
  return l;
}

}  // namespace rvb::matcalc
