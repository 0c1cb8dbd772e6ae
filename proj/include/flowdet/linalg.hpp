// Dense kernel used by the flow layers and the likelihood oracle:
// partial-pivot LU log|det|, inverse, cyclic-Jacobi symmetric
// eigendecomposition, and spectral norm by power iteration. Pure functions,
// safe to call concurrently.
#pragma once

#include <flowdet/types.hpp>

namespace flowdet::linalg {

struct LogDet {
  Real logabsdet;  // log|det a|
  int sign;        // +1 or -1, so sign * exp(logabsdet) = det a
};

// Partial (row) pivoting LU. Throws SingularMatrix when a pivot magnitude
// drops below 1e-300.
LogDet plu_logabsdet(MatrixRef a);

// Inverse via the same PLU factorization.
Matrix invert(MatrixRef a);

struct EigenPair {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]; orthonormal
};

// Cyclic Jacobi rotations on the symmetrized input until the off-diagonal
// Frobenius norm falls below tol * max(1, ||s||_F).
EigenPair sym_eig(MatrixRef s, Real tol = 1e-12);

struct SpectralNormResult {
  Real value;
  bool converged;
  Index iterations;
};

// Largest singular value by power iteration on a^T a, deterministic
// normalized all-ones start. After first convergence the iterate is
// perturbed once and re-converged, guarding against a start vector
// orthogonal to the top singular direction; the larger estimate wins.
SpectralNormResult spectral_norm_full(MatrixRef a, Real tol = 1e-8,
                                      Index max_iter = 10000);

inline Real spectral_norm(MatrixRef a, Real tol = 1e-8, Index max_iter = 10000) {
  return spectral_norm_full(a, tol, max_iter).value;
}

}  // namespace flowdet::linalg
