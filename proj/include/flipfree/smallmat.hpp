#pragma once

// Fixed-size (2x2, 3x3) dense kernels used by the per-element solver steps.
// Every routine is a pure function of its arguments.

#include "flipfree/types.hpp"

namespace flipfree {

template <int D>
struct SymEig {
  Vec<D> values;   // ascending
  Mat<D> vectors;  // orthonormal columns, S = V diag(values) V^T
};

template <int D>
struct Svd {
  Mat<D> left;    // R1, orthogonal
  Vec<D> sigma;   // descending, nonnegative
  Mat<D> right;   // R2, orthogonal; A = R1 diag(sigma) R2^T
};

template <int D>
struct Polar {
  Mat<D> rotation;  // U, det U = +1
  Mat<D> stretch;   // P, symmetric positive definite
};

template <int D>
inline Mat<D> symm(const Mat<D>& x) {
  return 0.5 * (x + x.transpose());
}

/// Symmetric eigendecomposition. 2x2 uses a single closed-form Jacobi
/// rotation, 3x3 cyclic Jacobi with a fixed sweep cap. Throws InvalidInput
/// when `s` is asymmetric beyond 1e-10 relative.
template <int D>
SymEig<D> sym_eig(const Mat<D>& s);

/// Singular value decomposition, closed form for 2x2 and one-sided Jacobi
/// for 3x3. The zero matrix yields sigma = 0 and identity factors.
template <int D>
Svd<D> svd(const Mat<D>& a);

/// Polar decomposition a = U P through the SVD, U = R1 R2^T and
/// P = R2 Sigma R2^T. When R1 R2^T is a reflection its last column is negated
/// and Sigma is replaced by eps_floor * I. Every singular value is raised to
/// at least eps_floor before P is formed.
template <int D>
Polar<D> polar_flip_aware(const Mat<D>& a, double eps_floor);

/// Rotation closest to `a` in the Frobenius norm (maximizer of U . a over
/// SO(d)). The reflection, if any, is absorbed by the smallest singular pair.
template <int D>
Mat<D> closest_rotation(const Mat<D>& a);

/// Square root of an SPD matrix. Uses Franca's closed form when its
/// discriminant is at least sqrt(machine eps) and the result squares back to
/// `s`; otherwise falls back to the eigendecomposition.
/// Throws InvalidInput when `s` is not symmetric positive definite.
template <int D>
Mat<D> sqrt_spd(const Mat<D>& s);

/// Unique positive root of c4 x^4 + c3 x^3 + c0 = 0 for c4 > 0, c0 < 0.
/// Closed-form quartic, polished by bracketed Newton iteration when the
/// relative residual exceeds 1e-10. Throws InvalidInput on bad signs.
double quartic_unique_positive(double c4, double c3, double c0);

/// Relative residual measure used by quartic_unique_positive.
double quartic_relative_residual(double c4, double c3, double c0, double x);

}  // namespace flipfree
