// Finite-difference Jacobian, the numeric cross-check for every analytic
// log-determinant in the project.
#pragma once

#include <flowdet/types.hpp>

#include <functional>

namespace flowdet {

// Central differences: column i is (fn(x + h e_i) - fn(x - h e_i)) / (2h).
inline Matrix numeric_jacobian(const std::function<Vector(VectorRef)>& fn,
                               VectorRef x, Real h) {
  Vector xp = x;
  const Vector f0 = fn(x);
  Matrix jac(f0.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const Real xi = xp[i];
    xp[i] = xi + h;
    const Vector fp = fn(xp);
    xp[i] = xi - h;
    const Vector fm = fn(xp);
    xp[i] = xi;
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

}  // namespace flowdet
