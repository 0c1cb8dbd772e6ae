// Monotonic rational-quadratic elementwise activation. A set of I inner
// bins on [x0, xI] is derived from unconstrained vectors (softmax widths,
// sigmoid height ratios, sigmoid knot derivatives, positive box scale);
// two outer bins with fixed far boundaries at +-bound extend the map to all
// of R, and beyond the far knots it continues linearly. Every bin is a
// rational quadratic with analytic inverse and derivative.
#pragma once

#include <flowdet/layer.hpp>

#include <functional>

namespace flowdet {

struct KnotSet {
  // Knot arrays including the two fixed outer-boundary knots;
  // size inner_bins + 3. Bin b spans [xs[b], xs[b+1]].
  Vector xs, ys, alphas;
  Index inner_bins = 0;     // I
  Real w = 1.0;             // box scale
  Real bound = 1e5;         // fixed far boundary coordinate
  Real outer_slope = 0.9;   // fixed slope and far derivative of outer bins

  // Construction intermediates kept for the parameter pullback.
  Vector bx;  // softmax(theta_x)
  Vector sy;  // sigmoid(theta_y)
  Vector sa;  // sigmoid(theta_a)

  Index bin_count() const { return inner_bins + 2; }
};

// Derives knots from unconstrained parameters; total for all finite inputs
// given w > 0 and theta_* of equal size >= 2.
KnotSet knots_from_params(VectorRef theta_x, VectorRef theta_y, VectorRef theta_a,
                          Real w, Real outer_slope = 0.9, Real bound = 1e5);

// Forward / inverse point evaluation; second element is dy/dx at the
// evaluated input point.
std::pair<Real, Real> rq_forward(const KnotSet& kn, Real x);
std::pair<Real, Real> rq_inverse(const KnotSet& kn, Real y);

// Gradient accumulator in knot space (same layout as KnotSet arrays).
struct KnotGrad {
  Vector xs, ys, alphas;
  explicit KnotGrad(const KnotSet& kn)
      : xs(Vector::Zero(kn.xs.size())),
        ys(Vector::Zero(kn.ys.size())),
        alphas(Vector::Zero(kn.alphas.size())) {}
};

// Reverse-mode step for one point: accumulates the gradient of
// grad_y * y(x) + grad_logdet * log y'(x) into kg and returns d/dx.
Real rq_backward_point(const KnotSet& kn, Real x, Real grad_y, Real grad_logdet,
                       KnotGrad& kg);

class RqActivationLayer final : public Layer {
 public:
  RqActivationLayer(Index dim, Index bins, Real box_scale = 3.0,
                    Real init_slope = 0.9);

  LayerKind kind() const override { return LayerKind::RqActivation; }
  Index dim() const override { return dim_; }

  FlowResult forward(MatrixRef x) const override;
  FlowResult inverse(MatrixRef y) const override;
  Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                  Eigen::Ref<Vector> param_grad) const override;

  // Re-initializes to the linear map y = slope * x (slopes saturating at
  // 1 - 1e-12 so the logit stays finite); also pins the outer-bin slope.
  void set_linear(Real slope);

  Index bins() const { return bins_; }
  Real outer_slope() const { return outer_slope_; }
  KnotSet knots() const;

  // Named views into the flat parameter block.
  Eigen::Map<Vector> theta_x() { return {theta_.data(), bins_ + 1}; }
  Eigen::Map<Vector> theta_y() { return {theta_.data() + (bins_ + 1), bins_ + 1}; }
  Eigen::Map<Vector> theta_a() { return {theta_.data() + 2 * (bins_ + 1), bins_ + 1}; }
  Real& w_raw() { return theta_[3 * (bins_ + 1)]; }  // box scale is exp(w_raw)

 private:
  Index dim_, bins_;
  Real outer_slope_;
};

// Strict interior local maxima of fn sampled on a uniform grid over [lo, hi].
Index local_maxima_count(const std::function<Real(Real)>& fn, Real lo, Real hi,
                         Index grid);

}  // namespace flowdet
