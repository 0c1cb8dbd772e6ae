// Invertible k x k convolution with stride k: a fused space-to-depth
// followed by an invertible channel mix. An (h, w, c) tensor becomes
// (h/k, w/k, k^2 c); the per-point log-determinant is the number of output
// positions times log|det(weight)|. With h = w = 1, k = 1 this is a plain
// invertible linear mix of all dimensions.
#pragma once

#include <flowdet/layer.hpp>

#include <vector>

namespace flowdet {

struct TensorShape {
  Index h = 1, w = 1, c = 1;
  Index size() const { return h * w * c; }
};

class InvConvLayer final : public Layer {
 public:
  // Requires k to divide both spatial extents.
  InvConvLayer(TensorShape in, Index k);

  LayerKind kind() const override { return LayerKind::InvConv; }
  Index dim() const override { return shape_in_.size(); }

  FlowResult forward(MatrixRef x) const override;
  FlowResult inverse(MatrixRef y) const override;
  Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                  Eigen::Ref<Vector> param_grad) const override;

  TensorShape shape_in() const { return shape_in_; }
  TensorShape shape_out() const { return shape_out_; }
  Index kernel() const { return k_; }
  Index positions() const { return positions_; }  // h*w/k^2

  Eigen::Map<Matrix> weight();                    // (k^2 c) x (k^2 c)
  Eigen::Map<const Matrix> weight() const;

 private:
  Matrix gather(MatrixRef x) const;   // n x (P*B) patch matrix
  Matrix scatter(MatrixRef g, Index batch) const;

  TensorShape shape_in_, shape_out_;
  Index k_, n_, positions_;
  std::vector<Index> patch_index_;    // flat input index per (position, slot)
};

}  // namespace flowdet
