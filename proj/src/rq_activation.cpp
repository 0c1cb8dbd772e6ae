#include <flowdet/layers/rq_activation.hpp>

#include <algorithm>
#include <cmath>

namespace flowdet {

namespace {

inline Real sigmoid(Real z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline Real logit(Real p) { return std::log(p / (1.0 - p)); }

// Bin quantities for bin b: [x0,x1] -> [y0,y1] with end derivatives a0,a1.
struct Bin {
  Real x0, x1, y0, y1, a0, a1;
  Real dx, dy, delta, rho;
};

Bin bin_at(const KnotSet& kn, Index b) {
  Bin bin;
  bin.x0 = kn.xs[b];
  bin.x1 = kn.xs[b + 1];
  bin.y0 = kn.ys[b];
  bin.y1 = kn.ys[b + 1];
  bin.a0 = kn.alphas[b];
  bin.a1 = kn.alphas[b + 1];
  bin.dx = bin.x1 - bin.x0;
  bin.dy = bin.y1 - bin.y0;
  bin.delta = bin.dy / bin.dx;
  bin.rho = bin.a0 + bin.a1 - 2.0 * bin.delta;
  return bin;
}

// Both ends of the relative coordinate, each computed directly from the
// knot coordinates so neither loses precision when the other is tiny (the
// outer bins pair a huge far boundary with points near the inner box).
struct BinPos {
  Real xi, eta;  // eta == 1 - xi in exact arithmetic
};

inline BinPos pos_from_x(const Bin& b, Real x) {
  return {(x - b.x0) / b.dx, (b.x1 - x) / b.dx};
}

// Anchors the evaluation at the nearer bin end; the two expressions are
// algebraically identical.
inline Real bin_value(const Bin& b, BinPos p) {
  const Real u = p.xi * p.eta;
  const Real den = b.delta + b.rho * u;
  if (p.xi <= 0.5) return b.y0 + b.dy * (b.delta * p.xi * p.xi + b.a0 * u) / den;
  return b.y1 - b.dy * p.eta * (b.delta * p.eta + b.a1 * p.xi) / den;
}

inline Real bin_derivative(const Bin& b, BinPos p) {
  const Real u = p.xi * p.eta;
  const Real den = b.delta + b.rho * u;
  const Real gamma =
      b.a1 * p.xi * p.xi + 2.0 * b.delta * u + b.a0 * p.eta * p.eta;
  return gamma * b.delta * b.delta / (den * den);
}

// Locates the bin containing x; callers handle |x| beyond the far knots.
Index find_bin_x(const KnotSet& kn, Real x) {
  const auto* beg = kn.xs.data();
  const auto* end = beg + kn.xs.size();
  Index b = static_cast<Index>(std::upper_bound(beg, end, x) - beg) - 1;
  return std::clamp<Index>(b, 0, kn.bin_count() - 1);
}

Index find_bin_y(const KnotSet& kn, Real y) {
  const auto* beg = kn.ys.data();
  const auto* end = beg + kn.ys.size();
  Index b = static_cast<Index>(std::upper_bound(beg, end, y) - beg) - 1;
  return std::clamp<Index>(b, 0, kn.bin_count() - 1);
}

}  // namespace

KnotSet knots_from_params(VectorRef theta_x, VectorRef theta_y, VectorRef theta_a,
                          Real w, Real outer_slope, Real bound) {
  const Index m = theta_x.size();  // I + 1
  require(m >= 2, "knots_from_params: need at least one inner bin");
  require(theta_y.size() == m && theta_a.size() == m,
          "knots_from_params: parameter vectors must share length");
  require(w > 0, "knots_from_params: box scale must be positive");
  require(outer_slope > 0 && outer_slope <= 1, "knots_from_params: outer slope in (0,1]");

  KnotSet kn;
  kn.inner_bins = m - 1;
  kn.w = w;
  kn.bound = bound;
  kn.outer_slope = outer_slope;

  // Normalized widths, heights and knot derivatives.
  kn.bx = (theta_x.array() - theta_x.maxCoeff()).exp().matrix();
  kn.bx /= kn.bx.sum();
  kn.sy.resize(m);
  kn.sa.resize(m);
  for (Index i = 0; i < m; ++i) {
    kn.sy[i] = sigmoid(theta_y[i]);
    kn.sa[i] = sigmoid(theta_a[i]);
  }

  Vector x_inner(m), y_inner(m);
  Real cum_x = 0.0, cum_y = 0.0;
  Vector by(m);
  for (Index i = 0; i < m; ++i) {
    cum_x += kn.bx[i];
    x_inner[i] = (2.0 * cum_x - 1.0) * w;
    cum_y += kn.sy[i] * kn.bx[i];
    by[i] = cum_y;
  }
  const Real by_max = by[m - 1];  // cumsum of positive terms peaks at the end
  for (Index i = 0; i < m; ++i) y_inner[i] = (2.0 * by[i] - by_max) * w;

  kn.xs.resize(m + 2);
  kn.ys.resize(m + 2);
  kn.alphas.resize(m + 2);
  kn.xs[0] = -bound;
  kn.xs.segment(1, m) = x_inner;
  kn.xs[m + 1] = bound;
  kn.ys[0] = y_inner[0] - outer_slope * (x_inner[0] + bound);
  kn.ys.segment(1, m) = y_inner;
  kn.ys[m + 1] = y_inner[m - 1] + outer_slope * (bound - x_inner[m - 1]);
  kn.alphas[0] = outer_slope;
  for (Index i = 0; i < m; ++i) kn.alphas[i + 1] = kn.sa[i];
  kn.alphas[m + 1] = outer_slope;
  return kn;
}

std::pair<Real, Real> rq_forward(const KnotSet& kn, Real x) {
  if (x <= kn.xs[0])
    return {kn.ys[0] + kn.outer_slope * (x - kn.xs[0]), kn.outer_slope};
  if (x >= kn.xs[kn.xs.size() - 1])
    return {kn.ys[kn.ys.size() - 1] + kn.outer_slope * (x - kn.xs[kn.xs.size() - 1]),
            kn.outer_slope};
  const Bin b = bin_at(kn, find_bin_x(kn, x));
  const BinPos p = pos_from_x(b, x);
  return {bin_value(b, p), bin_derivative(b, p)};
}

std::pair<Real, Real> rq_inverse(const KnotSet& kn, Real y) {
  if (y <= kn.ys[0])
    return {kn.xs[0] + (y - kn.ys[0]) / kn.outer_slope, kn.outer_slope};
  if (y >= kn.ys[kn.ys.size() - 1])
    return {kn.xs[kn.xs.size() - 1] + (y - kn.ys[kn.ys.size() - 1]) / kn.outer_slope,
            kn.outer_slope};
  const Bin b = bin_at(kn, find_bin_y(kn, y));
  const Real q = y - b.y0;
  const Real qr = b.y1 - y;  // dy - q, formed without cancellation

  // Solve A xi^2 + B xi + C = 0 for the root in [0,1]. Both the root and
  // its complement eta come from stable one-signed-denominator forms, and
  // the reconstruction anchors at the nearer knot.
  const Real qa = b.dy * (b.delta - b.a0) + q * b.rho;
  const Real qb = b.dy * b.a0 - q * b.rho;
  const Real qc = -q * b.delta;
  const Real disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) throw Error("rq_inverse: no root in bin (corrupt knots)");
  const Real root = std::sqrt(disc);
  const Real xi = (qc == 0.0) ? 0.0 : std::clamp(2.0 * qc / (-qb - root), 0.0, 1.0);
  // Substituting eta = 1 - xi gives A' = A, B' = -(2A+B), C' = qr * delta.
  const Real qc_eta = qr * b.delta;
  const Real eta =
      (qc_eta == 0.0) ? 0.0 : std::clamp(2.0 * qc_eta / (2.0 * qa + qb + root), 0.0, 1.0);
  const BinPos p{xi, eta};
  const Real x = (xi <= 0.5) ? b.x0 + xi * b.dx : b.x1 - eta * b.dx;
  return {x, bin_derivative(b, p)};
}

Real rq_backward_point(const KnotSet& kn, Real x, Real grad_y, Real grad_logdet,
                       KnotGrad& kg) {
  const Index last = kn.xs.size() - 1;
  if (x <= kn.xs[0]) {
    kg.ys[0] += grad_y;  // y = ys[0] + slope * (x - xs[0]); slope and xs[0] fixed
    return grad_y * kn.outer_slope;
  }
  if (x >= kn.xs[last]) {
    kg.ys[last] += grad_y;
    return grad_y * kn.outer_slope;
  }

  const Index bidx = find_bin_x(kn, x);
  const Bin b = bin_at(kn, bidx);
  const auto [xi, eta] = pos_from_x(b, x);
  const Real u = xi * eta;
  const Real den = b.delta + b.rho * u;
  const Real num = b.dy * (b.delta * xi * xi + b.a0 * u);
  const Real gamma = b.a1 * xi * xi + 2.0 * b.delta * u + b.a0 * eta * eta;

  // Reverse sweep mirroring the forward scalars line by line.
  Real gb_x0 = 0, gb_x1 = 0, gb_y0 = 0, gb_y1 = 0, gb_a0 = 0, gb_a1 = 0;
  Real gb_dx = 0, gb_dy = 0, gb_delta = 0, gb_xi = 0, gb_rho = 0;

  // logdet contribution: log f' = log gamma + 2 log delta - 2 log den.
  Real gb_gamma = grad_logdet / gamma;
  gb_delta += 2.0 * grad_logdet / b.delta;
  Real gb_den = -2.0 * grad_logdet / den;

  // y = y0 + num / den
  gb_y0 += grad_y;
  const Real gb_num = grad_y / den;
  gb_den += -grad_y * num / (den * den);

  // num = dy * (delta xi^2 + a0 u); du/dxi = eta - xi
  gb_dy += gb_num * (b.delta * xi * xi + b.a0 * u);
  gb_delta += gb_num * b.dy * xi * xi;
  gb_a0 += gb_num * b.dy * u;
  gb_xi += gb_num * b.dy * (2.0 * b.delta * xi + b.a0 * (eta - xi));

  // den = delta + rho u
  gb_delta += gb_den;
  gb_rho += gb_den * u;
  gb_xi += gb_den * b.rho * (eta - xi);

  // gamma = a1 xi^2 + 2 delta u + a0 eta^2
  gb_a1 += gb_gamma * xi * xi;
  gb_delta += gb_gamma * 2.0 * u;
  gb_a0 += gb_gamma * eta * eta;
  gb_xi += gb_gamma * (2.0 * b.a1 * xi + 2.0 * b.delta * (eta - xi) -
                       2.0 * b.a0 * eta);

  // rho = a0 + a1 - 2 delta
  gb_a0 += gb_rho;
  gb_a1 += gb_rho;
  gb_delta -= 2.0 * gb_rho;

  // xi = (x - x0) / dx
  const Real grad_x = gb_xi / b.dx;
  gb_x0 += -gb_xi / b.dx;
  gb_dx += -gb_xi * xi / b.dx;

  // delta = dy / dx
  gb_dy += gb_delta / b.dx;
  gb_dx += -gb_delta * b.delta / b.dx;

  // dx = x1 - x0, dy = y1 - y0
  gb_x1 += gb_dx;
  gb_x0 -= gb_dx;
  gb_y1 += gb_dy;
  gb_y0 -= gb_dy;

  kg.xs[bidx] += gb_x0;
  kg.xs[bidx + 1] += gb_x1;
  kg.ys[bidx] += gb_y0;
  kg.ys[bidx + 1] += gb_y1;
  kg.alphas[bidx] += gb_a0;
  kg.alphas[bidx + 1] += gb_a1;
  return grad_x;
}

RqActivationLayer::RqActivationLayer(Index dim, Index bins, Real box_scale,
                                     Real init_slope)
    : dim_(dim), bins_(bins), outer_slope_(init_slope) {
  require(bins >= 1, "rq activation: need at least one bin");
  theta_ = Vector::Zero(3 * (bins + 1) + 1);
  w_raw() = std::log(box_scale);
  set_linear(init_slope);
}

void RqActivationLayer::set_linear(Real slope) {
  require(slope > 0 && slope <= 1, "rq activation: slope must lie in (0,1]");
  // logit(1) is infinite; saturate just below so the construction stays total.
  const Real s = std::min(slope, 1.0 - 1e-12);
  outer_slope_ = s;
  theta_x().setZero();
  theta_y().setConstant(logit(s));
  theta_a().setConstant(logit(s));
}

KnotSet RqActivationLayer::knots() const {
  const Index m = bins_ + 1;
  return knots_from_params(theta_.segment(0, m), theta_.segment(m, m),
                           theta_.segment(2 * m, m), std::exp(theta_[3 * m]),
                           outer_slope_);
}

FlowResult RqActivationLayer::forward(MatrixRef x) const {
  const KnotSet kn = knots();
  FlowResult out;
  out.y.resize(x.rows(), x.cols());
  out.logdet = Vector::Zero(x.cols());
  for (Index b = 0; b < x.cols(); ++b)
    for (Index i = 0; i < x.rows(); ++i) {
      const auto [y, dydx] = rq_forward(kn, x(i, b));
      out.y(i, b) = y;
      out.logdet[b] += std::log(dydx);
    }
  return out;
}

FlowResult RqActivationLayer::inverse(MatrixRef y) const {
  const KnotSet kn = knots();
  FlowResult out;
  out.y.resize(y.rows(), y.cols());
  out.logdet = Vector::Zero(y.cols());
  for (Index b = 0; b < y.cols(); ++b)
    for (Index i = 0; i < y.rows(); ++i) {
      const auto [x, dydx] = rq_inverse(kn, y(i, b));
      out.y(i, b) = x;
      out.logdet[b] -= std::log(dydx);
    }
  return out;
}

Matrix RqActivationLayer::backward(MatrixRef x, MatrixRef grad_y,
                                   VectorRef grad_logdet,
                                   Eigen::Ref<Vector> param_grad) const {
  const KnotSet kn = knots();
  const Index m = bins_ + 1;
  KnotGrad kg(kn);
  Matrix grad_x(x.rows(), x.cols());
  for (Index b = 0; b < x.cols(); ++b)
    for (Index i = 0; i < x.rows(); ++i)
      grad_x(i, b) = rq_backward_point(kn, x(i, b), grad_y(i, b), grad_logdet[b], kg);

  // Fold the outer-boundary knots back onto the inner knots they follow:
  // ys[0] = y0 - slope (x0 + bound), ys[last] = yI + slope (bound - xI).
  const Index last = m + 1;
  kg.ys[1] += kg.ys[0];
  kg.xs[1] -= kn.outer_slope * kg.ys[0];
  kg.ys[m] += kg.ys[last];
  kg.xs[m] -= kn.outer_slope * kg.ys[last];

  Vector gx_inner = kg.xs.segment(1, m);
  Vector gy_inner = kg.ys.segment(1, m);
  Vector ga_inner = kg.alphas.segment(1, m);

  // Chain through the knot construction. Positions scale linearly with w.
  Real gw = 0.0;
  for (Index i = 0; i < m; ++i) {
    gw += gx_inner[i] * (kn.xs[i + 1] / kn.w);
    gw += gy_inner[i] * (kn.ys[i + 1] / kn.w);
  }

  // x_i = (2 cumsum(bx)_i - 1) w
  Vector g_cumx = 2.0 * kn.w * gx_inner;
  Vector g_bx = Vector::Zero(m);
  Real suffix = 0.0;
  for (Index i = m - 1; i >= 0; --i) {
    suffix += g_cumx[i];
    g_bx[i] = suffix;
  }

  // y_i = (2 by_i - by_{m-1}) w with by = cumsum(sy .* bx)
  Vector g_by = 2.0 * kn.w * gy_inner;
  g_by[m - 1] -= kn.w * gy_inner.sum();
  Vector g_bybar = Vector::Zero(m);
  suffix = 0.0;
  for (Index i = m - 1; i >= 0; --i) {
    suffix += g_by[i];
    g_bybar[i] = suffix;
  }

  Vector g_theta_y(m), g_theta_a(m);
  for (Index i = 0; i < m; ++i) {
    g_bx[i] += g_bybar[i] * kn.sy[i];
    g_theta_y[i] = g_bybar[i] * kn.bx[i] * kn.sy[i] * (1.0 - kn.sy[i]);
    g_theta_a[i] = ga_inner[i] * kn.sa[i] * (1.0 - kn.sa[i]);
  }

  // softmax pullback: g = p .* (gbar - <p, gbar>)
  const Real dot = kn.bx.dot(g_bx);
  Vector g_theta_x = (kn.bx.array() * (g_bx.array() - dot)).matrix();

  param_grad.segment(0, m) += g_theta_x;
  param_grad.segment(m, m) += g_theta_y;
  param_grad.segment(2 * m, m) += g_theta_a;
  param_grad[3 * m] += gw * kn.w;  // w = exp(w_raw)
  return grad_x;
}

Index local_maxima_count(const std::function<Real(Real)>& fn, Real lo, Real hi,
                         Index grid) {
  require(grid >= 3, "local_maxima_count: grid must be >= 3");
  Vector vals(grid);
  for (Index i = 0; i < grid; ++i)
    vals[i] = fn(lo + (hi - lo) * static_cast<Real>(i) / static_cast<Real>(grid - 1));
  Index count = 0;
  for (Index i = 1; i + 1 < grid; ++i)
    if (vals[i] > vals[i - 1] && vals[i] > vals[i + 1]) ++count;
  return count;
}

}  // namespace flowdet
