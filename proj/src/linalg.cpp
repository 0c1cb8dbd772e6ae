#include <flowdet/linalg.hpp>

#include <cmath>
#include <numeric>
#include <vector>

namespace flowdet::linalg {

namespace {

constexpr Real kPivotFloor = 1e-300;

struct PluFactors {
  Matrix lu;                // unit-lower L below diagonal, U on and above
  std::vector<Index> perm;  // row i of LU came from row perm[i] of a
  int sign;                 // permutation parity
};

PluFactors plu_factorize(MatrixRef a) {
  require(a.rows() == a.cols(), "plu: matrix must be square");
  require_finite(a, "plu");
  const Index n = a.rows();

  PluFactors f{a, std::vector<Index>(n), 1};
  std::iota(f.perm.begin(), f.perm.end(), Index{0});

  for (Index k = 0; k < n; ++k) {
    Index piv = k;
    Real best = std::abs(f.lu(k, k));
    for (Index i = k + 1; i < n; ++i) {
      const Real m = std::abs(f.lu(i, k));
      if (m > best) {
        best = m;
        piv = i;
      }
    }
    if (best < kPivotFloor) throw SingularMatrix("plu: pivot below 1e-300");
    if (piv != k) {
      f.lu.row(piv).swap(f.lu.row(k));
      std::swap(f.perm[piv], f.perm[k]);
      f.sign = -f.sign;
    }
    const Real inv_pivot = 1.0 / f.lu(k, k);
    for (Index i = k + 1; i < n; ++i) {
      const Real l = f.lu(i, k) * inv_pivot;
      f.lu(i, k) = l;
      f.lu.row(i).tail(n - k - 1) -= l * f.lu.row(k).tail(n - k - 1);
    }
  }
  return f;
}

}  // namespace

LogDet plu_logabsdet(MatrixRef a) {
  const PluFactors f = plu_factorize(a);
  Real logabs = 0.0;
  int sign = f.sign;
  for (Index k = 0; k < a.rows(); ++k) {
    const Real u = f.lu(k, k);
    logabs += std::log(std::abs(u));
    if (u < 0.0) sign = -sign;
  }
  return {logabs, sign};
}

Matrix invert(MatrixRef a) {
  const PluFactors f = plu_factorize(a);
  const Index n = a.rows();
  Matrix inv(n, n);
  Vector col(n);
  for (Index j = 0; j < n; ++j) {
    // Solve A x = e_j: permute, forward-substitute through L, back through U.
    for (Index i = 0; i < n; ++i) col[i] = (f.perm[i] == j) ? 1.0 : 0.0;
    for (Index i = 1; i < n; ++i)
      col[i] -= f.lu.row(i).head(i).dot(col.head(i));
    for (Index i = n - 1; i >= 0; --i) {
      if (i + 1 < n) col[i] -= f.lu.row(i).tail(n - i - 1).dot(col.tail(n - i - 1));
      col[i] /= f.lu(i, i);
    }
    inv.col(j) = col;
  }
  return inv;
}

EigenPair sym_eig(MatrixRef s, Real tol) {
  require(s.rows() == s.cols(), "sym_eig: matrix must be square");
  require_finite(s, "sym_eig");
  const Index n = s.rows();

  Matrix a = 0.5 * (s + s.transpose());  // symmetrize
  Matrix v = Matrix::Identity(n, n);
  const Real threshold = tol * std::max(Real(1), a.norm());

  auto off_norm = [&]() {
    Real sum = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) sum += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(sum);
  };

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && off_norm() > threshold; ++sweep) {
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Real apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const Real theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const Real t = (theta >= 0 ? 1.0 : -1.0) /
                       (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const Real c = 1.0 / std::sqrt(t * t + 1.0);
        const Real sn = t * c;

        // Rotate rows/columns p and q of A, accumulate into V.
        for (Index i = 0; i < n; ++i) {
          const Real aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - sn * aiq;
          a(i, q) = sn * aip + c * aiq;
        }
        for (Index i = 0; i < n; ++i) {
          const Real api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - sn * aqi;
          a(q, i) = sn * api + c * aqi;
        }
        for (Index i = 0; i < n; ++i) {
          const Real vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - sn * viq;
          v(i, q) = sn * vip + c * viq;
        }
      }
    }
  }

  // Sort descending by eigenvalue.
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index i, Index j) { return a(i, i) > a(j, j); });

  EigenPair out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

SpectralNormResult spectral_norm_full(MatrixRef a, Real tol, Index max_iter) {
  require_finite(a, "spectral_norm");
  const Index n = a.cols();

  Vector v = Vector::Ones(n) / std::sqrt(static_cast<Real>(n));
  Index used = 0;
  bool converged = false;

  auto iterate = [&](Vector start, bool& conv) {
    Real est = 0.0;
    Vector x = std::move(start);
    conv = false;
    Real prev = -1.0;
    while (used < max_iter) {
      ++used;
      Vector u = a * x;
      est = u.norm();
      if (est == 0.0) {
        conv = true;  // x in the null space; a zero estimate is exact there
        return std::pair{est, x};
      }
      Vector w = a.transpose() * u;
      x = w / w.norm();
      if (prev >= 0.0 && std::abs(est - prev) <= tol * std::max(est, Real(1e-300))) {
        conv = true;
        return std::pair{est, x};
      }
      prev = est;
    }
    return std::pair{est, x};
  };

  bool conv1 = false;
  auto [est1, v1] = iterate(v, conv1);

  // Restart from a deterministically perturbed iterate; the perturbation
  // reintroduces any top-direction component the start vector lacked.
  Vector pert = v1;
  for (Index i = 0; i < n; ++i) pert[i] += ((i % 2 == 0) ? 1e-6 : -1e-6);
  const Real pn = pert.norm();
  if (pn > 0) pert /= pn;
  bool conv2 = false;
  auto [est2, v2] = iterate(pert, conv2);

  converged = conv1 && conv2;
  return {std::max(est1, est2), converged, used};
}

}  // namespace flowdet::linalg
