// Dual affine coupling: two stacked affine couplings so every dimension is
// transformed once per block,
//   y1 = s1(x2) .* x1 + t1(x2),   y2 = s2(y1) .* x2 + t2(y1).
// The conditioners are small feed-forward nets (two tanh hidden layers)
// whose scale head is a mixture of Mexican-hat activations keeping
// s inside [exp(-2 e^{-1.5}), e] ⊂ (0.5, 3); an unconstrained exp head is
// available for the collapse ablation.
#pragma once

#include <flowdet/layer.hpp>
#include <flowdet/rng.hpp>

#include <vector>

namespace flowdet {

enum class ScaleHead {
  MexicanHat,   // log s = (1/M) sum_m (1 - phi_m^2) exp(-phi_m^2 / 2)
  Exponential,  // log s = raw linear output (no range limit)
};

// The Mexican-hat mixture component and its derivative.
inline Real mexican_hat(Real u) { return (1.0 - u * u) * std::exp(-0.5 * u * u); }
inline Real mexican_hat_deriv(Real u) { return u * (u * u - 3.0) * std::exp(-0.5 * u * u); }

// Reference single-point head evaluation: phi_m = w[m] * phi + b[m],
// s = exp((1/M) sum_m mexican_hat(phi_m)).
Vector mexican_hat_scale(VectorRef phi, const std::vector<Matrix>& w,
                         const std::vector<Vector>& b);

// Solves (1 - b^2) exp(-b^2/2) = -log(beta) for b on [0, sqrt(3)] by
// bisection; this is the head bias making s identically 1/beta when the
// head weights are zero. Attainable for beta in [exp(-1), 1].
Real mexican_hat_bias_for(Real beta, int iterations = 200);

class DualCouplingLayer final : public Layer {
 public:
  DualCouplingLayer(Index dim, Index split, Index hidden, Index heads,
                    ScaleHead head_kind = ScaleHead::MexicanHat);

  LayerKind kind() const override { return LayerKind::DualCoupling; }
  Index dim() const override { return dim_; }

  FlowResult forward(MatrixRef x) const override;
  FlowResult inverse(MatrixRef y) const override;
  Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                  Eigen::Ref<Vector> param_grad) const override;

  // Seeds the hidden trunk; output heads stay zero so the coupling remains
  // input-independent until trained.
  void randomize_trunk(Rng& rng);
  // Randomizes everything (test helper for generic-position Jacobians).
  void randomize_all(Rng& rng, Real scale);

  // Volume-preserving start: t == 0 and s == 1/beta via the common head bias.
  void set_identity_init(Real beta);

  // Pins the two scale heads' biases separately (weights untouched).
  void set_scale_bias(Real bias1, Real bias2);

  Index split() const { return split_; }
  Index hidden() const { return hidden_; }
  Index heads() const { return heads_; }
  ScaleHead head_kind() const { return head_kind_; }

 private:
  struct Net {
    Index in = 0, out = 0, hidden = 0, heads = 0;
    ScaleHead head_kind = ScaleHead::MexicanHat;
    Index offset = 0;  // into the layer's flat parameter block

    Index head_count() const { return head_kind == ScaleHead::MexicanHat ? heads : 1; }
    Index size() const;

    struct Cache {
      Matrix a1, phi;                // hidden activations
      Matrix logs, t;                // head outputs
      std::vector<Matrix> head_pre;  // phi_m per Mexican-hat component
    };
    void forward(const Vector& theta, MatrixRef x, Cache& c) const;
    // Returns the gradient w.r.t. the net input.
    Matrix backward(const Vector& theta, MatrixRef x, const Cache& c,
                    MatrixRef g_logs, MatrixRef g_t,
                    Eigen::Ref<Vector> g_theta) const;
  };

  Index dim_, split_, hidden_, heads_;
  ScaleHead head_kind_;
  Net net1_, net2_;
};

}  // namespace flowdet
