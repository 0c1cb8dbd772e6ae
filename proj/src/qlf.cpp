#include <flowdet/qlf.hpp>

#include <flowdet/flow.hpp>
#include <flowdet/linalg.hpp>
#include <flowdet/normal.hpp>

#include <cmath>

namespace flowdet::qlf {

namespace {

Real eig_bound(const Vector& floored, Index d) {
  return -0.5 * (static_cast<Real>(d) * kLogTwoPi + static_cast<Real>(d) +
                 floored.array().log().sum());
}

}  // namespace

Real qlf_lmax_per_point(VectorRef x, Real eps) {
  require(eps > 0, "qlf_lmax_per_point: eps must be positive");
  require_finite(x, "qlf_lmax_per_point");
  const Index d = x.size();
  const auto eig = linalg::sym_eig(x * x.transpose());
  const Vector floored = eig.values.cwiseMax(eps);
  return eig_bound(floored, d);
}

BoundReport ppca_lmax(MatrixRef rows, Real eps, Index bit_depth) {
  require(eps > 0, "ppca_lmax: eps must be positive");
  require(rows.rows() >= 2, "ppca_lmax: need at least two points");
  require_finite(rows, "ppca_lmax");
  const Index n = rows.rows();
  const Index d = rows.cols();

  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  const Matrix cov =
      centered.transpose() * centered / static_cast<Real>(n);  // ML normalization
  const auto eig = linalg::sym_eig(cov);

  BoundReport report;
  report.mode = "covariance";
  report.epsilon_floor = eps;
  report.dim = d;
  report.count = n;
  Vector floored = eig.values;
  for (Index i = 0; i < d; ++i)
    if (floored[i] < eps) {
      floored[i] = eps;
      ++report.floored_count;
    }
  if (report.floored_count == d)
    throw DegenerateData("ppca_lmax: all covariance eigenvalues at the floor");
  report.lmax_nats = eig_bound(floored, d);
  report.lmax_bpd = nll_bits_per_dim(report.lmax_nats, d, bit_depth);
  return report;
}

BoundReport per_point_lmax(MatrixRef rows, Real eps, Index bit_depth) {
  require(rows.rows() >= 1, "per_point_lmax: empty dataset");
  BoundReport report;
  report.mode = "per_point";
  report.epsilon_floor = eps;
  report.dim = rows.cols();
  report.count = rows.rows();
  Real sum = 0;
  for (Index i = 0; i < rows.rows(); ++i) {
    const Vector x = rows.row(i);
    const auto eig = linalg::sym_eig(x * x.transpose());
    Vector floored = eig.values;
    for (Index j = 0; j < floored.size(); ++j)
      if (floored[j] < eps) {
        floored[j] = eps;
        ++report.floored_count;
      }
    sum += eig_bound(floored, rows.cols());
  }
  report.lmax_nats = sum / static_cast<Real>(rows.rows());
  report.lmax_bpd = nll_bits_per_dim(report.lmax_nats, rows.cols(), bit_depth);
  return report;
}

Matrix qlf_stationary_W(MatrixRef s, MatrixRef u) {
  require(s.rows() == s.cols() && u.rows() == u.cols() && s.rows() == u.rows(),
          "qlf_stationary_W: square matrices of equal size required");
  const Index d = s.rows();
  if ((u.transpose() * u - Matrix::Identity(d, d)).norm() > 1e-8)
    throw NotOrthogonal("qlf_stationary_W: u is not orthogonal");
  const auto eig = linalg::sym_eig(s);
  if (eig.values.minCoeff() <= 0)
    throw InvalidArgument("qlf_stationary_W: s must be positive definite");
  const Vector inv_sqrt = eig.values.array().rsqrt().matrix();
  return u * inv_sqrt.asDiagonal() * eig.vectors.transpose();
}

Matrix qlf_gradient(MatrixRef w, MatrixRef s) {
  Matrix winv;
  try {
    winv = linalg::invert(w);
  } catch (const SingularMatrix&) {
    throw SingularMatrix("qlf_gradient: singular W");
  }
  return -w * s.transpose() + winv.transpose();
}

Real qlf_objective(MatrixRef w, MatrixRef s) {
  const Index d = w.rows();
  const Matrix m = w.transpose() * w;
  const Real logdet_w = linalg::plu_logabsdet(w).logabsdet;
  // log|det M^{-1}| = -2 log|det W|
  return -0.5 * (static_cast<Real>(d) * kLogTwoPi + (m * s).trace() -
                 2.0 * logdet_w);
}

HadamardAudit hadamard_audit(MatrixRef j) {
  require(j.rows() == j.cols(), "hadamard_audit: square matrix required");
  const Index d = j.rows();
  HadamardAudit audit;
  try {
    const auto det = linalg::plu_logabsdet(j);
    audit.det = det.sign * std::exp(det.logabsdet);
  } catch (const SingularMatrix&) {
    audit.det = 0.0;
  }
  audit.col_bound = 1.0;
  for (Index i = 0; i < d; ++i) audit.col_bound *= j.col(i).norm();
  audit.spec_bound =
      std::pow(linalg::spectral_norm(j, 1e-13, 200000), static_cast<Real>(d));
  const Real slack = 1e-12;
  audit.ok = std::abs(audit.det) <= audit.col_bound * (1.0 + slack) + slack &&
             audit.col_bound <= audit.spec_bound * (1.0 + slack) + slack;
  return audit;
}

Prop1Report prop1_audit(const TrainTrace& trace, Index layer_index,
                        Real threshold) {
  if (trace.steps.empty()) throw EmptyTrace("prop1_audit: empty trace");
  const Index nlayers = trace.layer_count();
  require(layer_index >= 0 && layer_index < nlayers,
          "prop1_audit: layer index out of range");

  Prop1Report report;
  report.layer = layer_index;
  report.threshold = threshold;
  report.rows.reserve(trace.steps.size());
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    const StepRecord& rec = trace.steps[s];
    Prop1Row row;
    row.step = static_cast<Index>(s);
    row.tail_logdet =
        rec.logdet.segment(layer_index + 1, nlayers - layer_index - 1).sum();
    row.grad_norm = rec.gradnorm[layer_index];
    row.flagged = row.tail_logdet > threshold;
    if (row.flagged) ++report.flagged_count;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace flowdet::qlf
