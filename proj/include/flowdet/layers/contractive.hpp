// Parameterless contractive elementwise activations: tanh and the standard
// normal CDF. Both have derivative bounded above (1 for tanh, 1/sqrt(2*pi)
// for the CDF) and are used as Lipschitz-tightening inserts.
#pragma once

#include <flowdet/layer.hpp>

namespace flowdet {

class TanhLayer final : public Layer {
 public:
  explicit TanhLayer(Index dim) : dim_(dim) {}

  LayerKind kind() const override { return LayerKind::Tanh; }
  Index dim() const override { return dim_; }

  FlowResult forward(MatrixRef x) const override;
  FlowResult inverse(MatrixRef y) const override;
  Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                  Eigen::Ref<Vector> param_grad) const override;

 private:
  Index dim_;
};

class NormalCdfLayer final : public Layer {
 public:
  explicit NormalCdfLayer(Index dim) : dim_(dim) {}

  LayerKind kind() const override { return LayerKind::NormalCdf; }
  Index dim() const override { return dim_; }

  FlowResult forward(MatrixRef x) const override;
  FlowResult inverse(MatrixRef y) const override;
  Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                  Eigen::Ref<Vector> param_grad) const override;

 private:
  Index dim_;
};

}  // namespace flowdet
