#include <flowdet/layers/contractive.hpp>
#include <flowdet/normal.hpp>

#include <cmath>

namespace flowdet {

namespace {

// log(1 - tanh(x)^2) = 2*(log 2 - |x| - log1p(exp(-2|x|))), stable for all x.
inline Real log_sech2(Real x) {
  const Real ax = std::abs(x);
  return 2.0 * (std::log(2.0) - ax - std::log1p(std::exp(-2.0 * ax)));
}

}  // namespace

FlowResult TanhLayer::forward(MatrixRef x) const {
  FlowResult out;
  out.y = x.array().tanh().matrix();
  out.logdet.resize(x.cols());
  for (Index b = 0; b < x.cols(); ++b) {
    Real s = 0.0;
    for (Index i = 0; i < x.rows(); ++i) s += log_sech2(x(i, b));
    out.logdet[b] = s;
  }
  return out;
}

FlowResult TanhLayer::inverse(MatrixRef y) const {
  FlowResult out;
  out.y.resize(y.rows(), y.cols());
  out.logdet.resize(y.cols());
  for (Index b = 0; b < y.cols(); ++b) {
    Real s = 0.0;
    for (Index i = 0; i < y.rows(); ++i) {
      const Real v = y(i, b);
      if (!(v > -1.0 && v < 1.0)) throw OutOfDomain("tanh inverse: |y| >= 1");
      const Real x = std::atanh(v);
      out.y(i, b) = x;
      s += log_sech2(x);
    }
    out.logdet[b] = -s;
  }
  return out;
}

Matrix TanhLayer::backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                           Eigen::Ref<Vector>) const {
  // d tanh/dx = 1 - tanh^2; d log(1 - tanh^2)/dx = -2 tanh.
  const Matrix t = x.array().tanh().matrix();
  Matrix grad_x = ((1.0 - t.array().square()) * grad_y.array()).matrix();
  for (Index b = 0; b < x.cols(); ++b) grad_x.col(b) -= 2.0 * grad_logdet[b] * t.col(b);
  return grad_x;
}

FlowResult NormalCdfLayer::forward(MatrixRef x) const {
  FlowResult out;
  out.y.resize(x.rows(), x.cols());
  out.logdet.resize(x.cols());
  for (Index b = 0; b < x.cols(); ++b) {
    Real s = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
      out.y(i, b) = normal_cdf(x(i, b));
      s += normal_log_pdf(x(i, b));
    }
    out.logdet[b] = s;
  }
  return out;
}

FlowResult NormalCdfLayer::inverse(MatrixRef y) const {
  FlowResult out;
  out.y.resize(y.rows(), y.cols());
  out.logdet.resize(y.cols());
  for (Index b = 0; b < y.cols(); ++b) {
    Real s = 0.0;
    for (Index i = 0; i < y.rows(); ++i) {
      const Real v = y(i, b);
      if (!(v > 0.0 && v < 1.0)) throw OutOfDomain("normal CDF inverse: y outside (0,1)");
      const Real x = normal_quantile(v);
      out.y(i, b) = x;
      s += normal_log_pdf(x);
    }
    out.logdet[b] = -s;
  }
  return out;
}

Matrix NormalCdfLayer::backward(MatrixRef x, MatrixRef grad_y, VectorRef grad_logdet,
                                Eigen::Ref<Vector>) const {
  // dPhi/dx = pdf(x); d log pdf(x)/dx = -x.
  Matrix grad_x(x.rows(), x.cols());
  for (Index b = 0; b < x.cols(); ++b)
    for (Index i = 0; i < x.rows(); ++i)
      grad_x(i, b) = normal_pdf(x(i, b)) * grad_y(i, b) - x(i, b) * grad_logdet[b];
  return grad_x;
}

}  // namespace flowdet
