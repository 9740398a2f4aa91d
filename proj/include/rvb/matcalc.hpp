#pragma once

// Small dense matrix calculus kernel: vec / half-vec operators, the
// elimination, duplication and commutation maps (applied as index maps, never
// materialised), and the Cholesky machinery used by every gradient formula.
//
// Matrices are Eigen column-major; lower-triangular factors are stored dense
// with a zero upper triangle. Orders are expected to be small (r <= 10).

#include <Eigen/Dense>

namespace rvb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace matcalc {

// Length of v(A) for an r x r matrix.
constexpr int half_size(int r) { return r * (r + 1) / 2; }

// Position of entry (row, col), row >= col, inside v(A).
constexpr int half_index(int row, int col, int r) {
  return col * r - col * (col - 1) / 2 + (row - col);
}

// Inverse of half_size; throws LengthMismatch if len is not triangular.
int order_from_half_size(int len);

Vector vec(const Matrix& a);
Matrix unvec(const Vector& x, int r);

// v(A): column-stacked lower triangle including the diagonal.
Vector halfvec(const Matrix& a);
// Lower-triangular matrix whose v() is h.
Matrix lower_from_halfvec(const Vector& h, int r);

// E_r x, D_r h, K_r x and N_r x.
Vector elim_apply(const Vector& x, int r);
Vector elim_transpose_apply(const Vector& h, int r);
Vector dup_apply(const Vector& h, int r);
Vector comm_apply(const Vector& x, int r);
Vector sym_apply(const Vector& x, int r);

Matrix dg(const Matrix& a);
Matrix tri_lower(const Matrix& a);
// k(A) = lower(A) - dg(A)/2
Matrix k_op(const Matrix& a);

// Cholesky factor of (S + S^T)/2. Throws NotPositiveDefinite when a pivot is
// not strictly positive.
Matrix cholesky(const Matrix& s);

// Differential of the Cholesky factor: dL = L k(L^{-1} dS L^{-T}).
Matrix chol_diff(const Matrix& l, const Matrix& ds);

// Chain-rule scaling for a log-diagonal parameterisation of a lower factor:
// M_ii at diagonal positions of v(), 1 elsewhere.
Vector dweight(const Matrix& m);

// Solves L x = b and L^T x = b for lower-triangular L.
Vector lower_solve(const Matrix& l, const Vector& b);
Vector lower_transpose_solve(const Matrix& l, const Vector& b);

// Inverse of an SPD matrix through its Cholesky factor.
Matrix spd_inverse(const Matrix& s);

// Log-diagonal packing: diagonal entries replaced by their logs (and back).
Vector pack_log_diag(const Matrix& lower);
Matrix unpack_log_diag(const Vector& packed, int r);

}  // namespace matcalc
}  // namespace rvb
