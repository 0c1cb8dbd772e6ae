#include <flowdet/layers/inv_conv.hpp>
#include <flowdet/linalg.hpp>

namespace flowdet {

// Flat tensor layout is row-major (h, w, c): element (i, j, ch) lives at
// (i*w + j)*c + ch. Output patches are contiguous: position p owns output
// rows [p*n, (p+1)*n) with n = k^2 c.

InvConvLayer::InvConvLayer(TensorShape in, Index k) : shape_in_(in), k_(k) {
  require(k >= 1, "inv_conv: k must be >= 1");
  require(in.h % k == 0 && in.w % k == 0, "inv_conv: k must divide spatial dims");
  shape_out_ = {in.h / k, in.w / k, k * k * in.c};
  n_ = k_ * k_ * in.c;
  positions_ = shape_out_.h * shape_out_.w;

  patch_index_.resize(positions_ * n_);
  for (Index oi = 0; oi < shape_out_.h; ++oi)
    for (Index oj = 0; oj < shape_out_.w; ++oj) {
      const Index p = oi * shape_out_.w + oj;
      for (Index di = 0; di < k_; ++di)
        for (Index dj = 0; dj < k_; ++dj)
          for (Index ch = 0; ch < in.c; ++ch) {
            const Index slot = (di * k_ + dj) * in.c + ch;
            const Index src = ((oi * k_ + di) * in.w + (oj * k_ + dj)) * in.c + ch;
            patch_index_[p * n_ + slot] = src;
          }
    }

  theta_ = Vector::Zero(n_ * n_);
  weight().setIdentity();
}

Eigen::Map<Matrix> InvConvLayer::weight() { return {theta_.data(), n_, n_}; }
Eigen::Map<const Matrix> InvConvLayer::weight() const { return {theta_.data(), n_, n_}; }

Matrix InvConvLayer::gather(MatrixRef x) const {
  const Index batch = x.cols();
  Matrix g(n_, positions_ * batch);
  for (Index p = 0; p < positions_; ++p)
    for (Index slot = 0; slot < n_; ++slot)
      g.row(slot).segment(p * batch, batch) = x.row(patch_index_[p * n_ + slot]);
  return g;
}

Matrix InvConvLayer::scatter(MatrixRef g, Index batch) const {
  Matrix x(shape_in_.size(), batch);
  for (Index p = 0; p < positions_; ++p)
    for (Index slot = 0; slot < n_; ++slot)
      x.row(patch_index_[p * n_ + slot]) = g.row(slot).segment(p * batch, batch);
  return x;
}

FlowResult InvConvLayer::forward(MatrixRef x) const {
  linalg::LogDet det;
  try {
    det = linalg::plu_logabsdet(weight());
  } catch (const SingularMatrix&) {
    throw NonInvertibleParams("inv_conv: singular weight");
  }
  const Index batch = x.cols();
  const Matrix mixed = weight() * gather(x);

  FlowResult out;
  out.y.resize(shape_out_.size(), batch);
  for (Index p = 0; p < positions_; ++p)
    out.y.middleRows(p * n_, n_) = mixed.middleCols(p * batch, batch);
  out.logdet = Vector::Constant(batch, static_cast<Real>(positions_) * det.logabsdet);
  return out;
}

FlowResult InvConvLayer::inverse(MatrixRef y) const {
  Matrix winv;
  linalg::LogDet det;
  try {
    det = linalg::plu_logabsdet(weight());
    winv = linalg::invert(weight());
  } catch (const SingularMatrix&) {
    throw NonInvertibleParams("inv_conv: singular weight");
  }
  const Index batch = y.cols();
  Matrix patches(n_, positions_ * batch);
  for (Index p = 0; p < positions_; ++p)
    patches.middleCols(p * batch, batch) = winv * y.middleRows(p * n_, n_);

  FlowResult out;
  out.y = scatter(patches, batch);
  out.logdet = Vector::Constant(batch, -static_cast<Real>(positions_) * det.logabsdet);
  return out;
}

Matrix InvConvLayer::backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                              Eigen::Ref<Vector> param_grad) const {
  const Index batch = x.cols();
  const Matrix xp = gather(x);
  Matrix gy(n_, positions_ * batch);
  for (Index p = 0; p < positions_; ++p)
    gy.middleCols(p * batch, batch) = grad_y.middleRows(p * n_, n_);

  Eigen::Map<Matrix> gw(param_grad.data(), n_, n_);
  gw.noalias() += gy * xp.transpose();
  gw += (static_cast<Real>(positions_) * grad_logdet.sum()) *
        linalg::invert(weight()).transpose();

  return scatter(weight().transpose() * gy, batch);
}

}  // namespace flowdet
