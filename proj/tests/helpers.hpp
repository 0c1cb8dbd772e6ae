// Shared test utilities: independent oracles (cofactor determinants,
// finite-difference gradients) and seeded generators for random matrices,
// layers and models. Oracles here never call the code paths they check.
#pragma once

#include <flowdet/flow.hpp>
#include <flowdet/layers/contractive.hpp>
#include <flowdet/layers/linear.hpp>
#include <flowdet/rng.hpp>

#include <Eigen/QR>

#include <functional>

namespace flowdet::test {

inline Real rel_err(Real a, Real b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), Real(1)});
}

// Laplace expansion along the first row; exact reference for d <= 4.
inline Real cofactor_det(const Matrix& a) {
  const Index n = a.rows();
  if (n == 1) return a(0, 0);
  Real det = 0.0;
  for (Index j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (Index r = 1; r < n; ++r) {
      Index cc = 0;
      for (Index c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, cc++) = a(r, c);
      }
    }
    det += ((j % 2 == 0) ? 1.0 : -1.0) * a(0, j) * cofactor_det(minor);
  }
  return det;
}

inline Matrix random_orthogonal(Rng& rng, Index d) {
  const Matrix g = rng.gaussian_matrix(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

inline Matrix random_spd(Rng& rng, Index d, Real lmin, Real lmax) {
  const Matrix q = random_orthogonal(rng, d);
  Vector lambda(d);
  for (Index i = 0; i < d; ++i) lambda[i] = rng.uniform(lmin, lmax);
  return q * lambda.asDiagonal() * q.transpose();
}

// Central finite differences of a scalar function of a parameter vector,
// step h_i = h0 * (1 + |theta_i|).
inline Vector fd_gradient(const std::function<Real(const Vector&)>& f,
                          const Vector& theta, Real h0 = 1e-5) {
  Vector g(theta.size());
  Vector t = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const Real h = h0 * (1.0 + std::abs(theta[i]));
    const Real ti = t[i];
    t[i] = ti + h;
    const Real fp = f(t);
    t[i] = ti - h;
    const Real fm = f(t);
    t[i] = ti;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Scalar objective used to check Layer::backward against finite differences:
//   sum_b <gy(:,b), y(:,b)> + sum_b gld(b) * logdet(b).
inline Real layer_objective(const Layer& layer, const Matrix& x, const Matrix& gy,
                            const Vector& gld) {
  const FlowResult r = layer.forward(x);
  Real obj = (gy.array() * r.y.array()).sum();
  obj += gld.dot(r.logdet);
  return obj;
}

// Max combined abs/rel mismatch between the analytic parameter gradient and
// central finite differences of layer_objective.
inline Real max_param_grad_err(Layer& layer, const Matrix& x, const Matrix& gy,
                               const Vector& gld, Real h0 = 1e-5) {
  Vector analytic = Vector::Zero(layer.param_count());
  layer.backward(x, gy, gld, analytic);

  const Vector saved = layer.params();
  const Vector fd = fd_gradient(
      [&](const Vector& t) {
        layer.params() = t;
        return layer_objective(layer, x, gy, gld);
      },
      saved, h0);
  layer.params() = saved;

  Real worst = 0.0;
  for (Index i = 0; i < fd.size(); ++i)
    worst = std::max(worst, rel_err(analytic[i], fd[i]));
  return worst;
}

inline Real max_input_grad_err(const Layer& layer, const Matrix& x, const Matrix& gy,
                               const Vector& gld, Real h0 = 1e-5) {
  Vector dummy = Vector::Zero(layer.param_count());
  const Matrix analytic = layer.backward(x, gy, gld, dummy);

  Real worst = 0.0;
  Matrix xp = x;
  for (Index b = 0; b < x.cols(); ++b)
    for (Index i = 0; i < x.rows(); ++i) {
      const Real h = h0 * (1.0 + std::abs(x(i, b)));
      const Real v = xp(i, b);
      xp(i, b) = v + h;
      const Real fp = layer_objective(layer, xp, gy, gld);
      xp(i, b) = v - h;
      const Real fm = layer_objective(layer, xp, gy, gld);
      xp(i, b) = v;
      worst = std::max(worst, rel_err(analytic(i, b), (fp - fm) / (2.0 * h)));
    }
  return worst;
}

// A coupling with randomized trunk and heads, generic position.
inline LayerPtr random_coupling(Index d, Rng& rng, Real head_scale = 0.5,
                                ScaleHead head = ScaleHead::MexicanHat) {
  auto c = std::make_unique<DualCouplingLayer>(d, d / 2, 8, 3, head);
  c->randomize_all(rng, head_scale);
  return c;
}

inline LayerPtr random_rq(Index d, Rng& rng, Index bins = 4) {
  auto a = std::make_unique<RqActivationLayer>(d, bins, 2.0, 0.8);
  a->params() = 0.7 * rng.gaussian_vector(a->param_count());
  return a;
}

inline LayerPtr random_conv_vec(Index d, Rng& rng) {
  auto c = std::make_unique<InvConvLayer>(TensorShape{1, 1, d}, 1);
  c->weight() += 0.4 * rng.gaussian_matrix(d, d);
  return c;
}

// Finite-difference oracles assume local C^2 smoothness; the spline is only
// C^1 at its knots, so test points must keep clear of them.
inline bool clear_of_knots(const RqActivationLayer& act, MatrixRef x,
                           Real margin = 1e-4) {
  const KnotSet kn = act.knots();
  for (Index b = 0; b < x.cols(); ++b)
    for (Index i = 0; i < x.rows(); ++i)
      for (Index k = 0; k < kn.xs.size(); ++k)
        if (std::abs(x(i, b) - kn.xs[k]) < margin) return false;
  return true;
}

// Same check through a single-level model: every spline layer's input must
// stay clear of that layer's knots.
inline bool clear_of_knots(const FlowModel& model, MatrixRef x,
                           Real margin = 1e-4) {
  Matrix h = x;
  for (Index i = 0; i < model.layer_count(); ++i) {
    const Layer& layer = model.layer(i);
    if (layer.kind() == LayerKind::RqActivation &&
        !clear_of_knots(static_cast<const RqActivationLayer&>(layer), h, margin))
      return false;
    h = layer.forward(h).y;
  }
  return true;
}

// Two-block proposed-flow model on vector data, randomized.
inline FlowModel random_two_block_model(Index d, Rng& rng, Index bins = 4,
                                        BaseKind base = BaseKind::Normal) {
  std::vector<LayerPtr> layers;
  for (int b = 0; b < 2; ++b) {
    layers.push_back(random_conv_vec(d, rng));
    layers.push_back(random_coupling(d, rng));
    layers.push_back(random_rq(d, rng, bins));
  }
  std::vector<std::pair<std::vector<LayerPtr>, Index>> levels;
  levels.emplace_back(std::move(layers), 0);
  return multiscale_compose(d, base, std::move(levels));
}

}  // namespace flowdet::test
