// Closed-form likelihood optima for quasi-linear flows and the bound
// audits: the per-point and covariance (PPCA) eigenvalue formulas, the
// stationary-point construction W = U diag(lambda)^{-1/2} V^T, the
// Hadamard-chain determinant audit and the bounded-gradient diagnostic.
#pragma once

#include <flowdet/trace.hpp>
#include <flowdet/types.hpp>

#include <string>
#include <vector>

namespace flowdet::qlf {

// -1/2 (d log 2pi + d + sum_i log lambda_i) with lambda the eigenvalues of
// x x^T floored at eps (the per-point matrix is rank one, so the floor is
// what keeps the value finite).
Real qlf_lmax_per_point(VectorRef x, Real eps);

struct BoundReport {
  Real lmax_nats = 0;
  Real lmax_bpd = 0;
  Index floored_count = 0;  // eigenvalues clamped to the floor
  Real epsilon_floor = 0;
  std::string mode;  // "per_point" | "covariance"
  Index dim = 0;
  Index count = 0;  // data points used
};

// Covariance (PPCA) form: centers the rows internally, eigendecomposes the
// 1/N sample covariance, floors at eps. Throws DegenerateData when every
// eigenvalue is floored.
BoundReport ppca_lmax(MatrixRef rows, Real eps, Index bit_depth = 0);

// Mean of the per-point bound over the rows.
BoundReport per_point_lmax(MatrixRef rows, Real eps, Index bit_depth = 0);

// W = U Lambda^{-1/2} V^T from the eigendecomposition of s; requires u
// orthogonal within 1e-8 Frobenius and s positive definite.
Matrix qlf_stationary_W(MatrixRef s, MatrixRef u);

// d/dW of the quasi-linear log-likelihood: -W S^T + W^{-T}.
Matrix qlf_gradient(MatrixRef w, MatrixRef s);

// The per-point objective -1/2 (d log 2pi + tr(M S) + log|det M^{-1}|),
// M = W^T W.
Real qlf_objective(MatrixRef w, MatrixRef s);

struct HadamardAudit {
  Real det = 0;         // det j
  Real col_bound = 0;   // product of column norms
  Real spec_bound = 0;  // spectral_norm(j)^d
  bool ok = false;      // |det| <= col_bound <= spec_bound, 1e-12 slack each
};

HadamardAudit hadamard_audit(MatrixRef j);

struct Prop1Row {
  Index step = 0;
  Real tail_logdet = 0;  // sum of logdet_j over layers j > l
  Real grad_norm = 0;    // parameter-gradient norm of layer l
  bool flagged = false;  // tail_logdet above the configured threshold
};

struct Prop1Report {
  Index layer = 0;
  Real threshold = 0;  // caller supplies d log K
  std::vector<Prop1Row> rows;
  Index flagged_count = 0;
};

// Observational diagnostic, not an assertion: emits the tail log-det sum
// next to the layer's gradient norm per step and flags threshold crossings.
Prop1Report prop1_audit(const TrainTrace& trace, Index layer_index,
                        Real threshold);

}  // namespace flowdet::qlf
