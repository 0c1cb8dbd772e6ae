// Unconstrained affine linear flow y = W x + b with log|det W| contribution.
// This is the layer whose maximum-likelihood optimum the closed-form
// covariance-eigenvalue bound pins down exactly.
#pragma once

#include <flowdet/layer.hpp>

namespace flowdet {

class LinearLayer final : public Layer {
 public:
  explicit LinearLayer(Index dim);

  LayerKind kind() const override { return LayerKind::Linear; }
  Index dim() const override { return dim_; }

  FlowResult forward(MatrixRef x) const override;
  FlowResult inverse(MatrixRef y) const override;
  Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                  Eigen::Ref<Vector> param_grad) const override;

  Eigen::Map<Matrix> weight();
  Eigen::Map<const Matrix> weight() const;
  Eigen::Map<Vector> bias();
  Eigen::Map<const Vector> bias() const;

 private:
  Index dim_;
};

}  // namespace flowdet
