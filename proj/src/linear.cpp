#include <flowdet/layers/linear.hpp>
#include <flowdet/linalg.hpp>

namespace flowdet {

LinearLayer::LinearLayer(Index dim) : dim_(dim) {
  theta_ = Vector::Zero(dim * dim + dim);
  weight().setIdentity();
}

Eigen::Map<Matrix> LinearLayer::weight() {
  return {theta_.data(), dim_, dim_};
}
Eigen::Map<const Matrix> LinearLayer::weight() const {
  return {theta_.data(), dim_, dim_};
}
Eigen::Map<Vector> LinearLayer::bias() {
  return {theta_.data() + dim_ * dim_, dim_};
}
Eigen::Map<const Vector> LinearLayer::bias() const {
  return {theta_.data() + dim_ * dim_, dim_};
}

FlowResult LinearLayer::forward(MatrixRef x) const {
  linalg::LogDet det;
  try {
    det = linalg::plu_logabsdet(weight());
  } catch (const SingularMatrix&) {
    throw NonInvertibleParams("linear layer: singular weight");
  }
  FlowResult out;
  out.y = (weight() * x).colwise() + bias();
  out.logdet = Vector::Constant(x.cols(), det.logabsdet);
  return out;
}

FlowResult LinearLayer::inverse(MatrixRef y) const {
  Matrix winv;
  linalg::LogDet det;
  try {
    det = linalg::plu_logabsdet(weight());
    winv = linalg::invert(weight());
  } catch (const SingularMatrix&) {
    throw NonInvertibleParams("linear layer: singular weight");
  }
  FlowResult out;
  out.y = winv * (y.colwise() - bias());
  out.logdet = Vector::Constant(y.cols(), -det.logabsdet);
  return out;
}

Matrix LinearLayer::backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                             Eigen::Ref<Vector> param_grad) const {
  // d log|det W|/dW = W^{-T}, shared by every point in the batch.
  const Matrix winv_t = linalg::invert(weight()).transpose();
  Eigen::Map<Matrix> gw(param_grad.data(), dim_, dim_);
  Eigen::Map<Vector> gb(param_grad.data() + dim_ * dim_, dim_);
  gw.noalias() += grad_y * x.transpose();
  gw += grad_logdet.sum() * winv_t;
  gb += grad_y.rowwise().sum();
  return weight().transpose() * grad_y;
}

}  // namespace flowdet
