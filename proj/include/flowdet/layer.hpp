// Invertible-layer contract. Every layer maps a batch of column vectors
// through a diffeomorphism and reports the per-point log|det| of its
// Jacobian; backward() is the analytic reverse-mode pullback of the pair
// (y, logdet). Layers are pure given their parameters.
#pragma once

#include <flowdet/types.hpp>

#include <memory>
#include <string>
#include <utility>

namespace flowdet {

enum class LayerKind {
  Linear,        // y = W x + b
  InvConv,       // fused squeeze + channel mixing
  DualCoupling,  // two stacked affine couplings
  RqActivation,  // monotonic rational-quadratic elementwise map
  Tanh,
  NormalCdf,
};

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct FlowResult {
  Matrix y;       // d x B
  Vector logdet;  // per point, length B
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Index dim() const = 0;

  virtual FlowResult forward(MatrixRef x) const = 0;
  virtual FlowResult inverse(MatrixRef y) const = 0;

  // Accumulates into param_grad the gradient of
  //   sum_b <grad_y(:,b), y(:,b)> + sum_b grad_logdet(b) * logdet(b)
  // with respect to this layer's parameters, and returns the gradient with
  // respect to x. param_grad must be zero-initialized by the caller (or hold
  // a partial sum to accumulate onto).
  virtual Matrix backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                          Eigen::Ref<Vector> param_grad) const = 0;

  Index param_count() const { return theta_.size(); }
  Vector& params() { return theta_; }
  const Vector& params() const { return theta_; }

 protected:
  Vector theta_;  // flat parameter block; subclasses hold named views
};

using LayerPtr = std::unique_ptr<Layer>;

enum class Direction { Forward, Inverse };

// Single-point convenience wrapper with input validation.
std::pair<Vector, Real> layer_apply(const Layer& layer, Direction dir, VectorRef x);

}  // namespace flowdet
