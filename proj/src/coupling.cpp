#include <flowdet/layers/coupling.hpp>

#include <cmath>

namespace flowdet {

namespace {

// Offsets within one conditioner block, in declaration order:
// W1 (H x in), b1, W2 (H x H), b2, Wt (out x H), bt, then the head blocks.
struct NetViews {
  Eigen::Map<const Matrix> w1, w2, wt;
  Eigen::Map<const Vector> b1, b2, bt;
  const Real* head_base;
};

}  // namespace

Vector mexican_hat_scale(VectorRef phi, const std::vector<Matrix>& w,
                         const std::vector<Vector>& b) {
  require(!w.empty() && w.size() == b.size(), "mexican_hat_scale: need M >= 1 heads");
  Vector log_s = Vector::Zero(b[0].size());
  for (std::size_t m = 0; m < w.size(); ++m) {
    Vector pre = w[m] * phi + b[m];
    for (Index j = 0; j < pre.size(); ++j) log_s[j] += mexican_hat(pre[j]);
  }
  log_s /= static_cast<Real>(w.size());
  return log_s.array().exp().matrix();
}

Real mexican_hat_bias_for(Real beta, int iterations) {
  require(beta > 0 && beta <= 1, "mexican hat bias: beta outside (0,1]");
  const Real target = -std::log(beta);
  if (target > mexican_hat(0.0))
    throw InvalidArgument("mexican hat bias: -log(beta) above head range; need beta >= exp(-1)");
  Real lo = 0.0, hi = std::sqrt(3.0);  // head value decreases from 1 to -2 e^{-1.5}
  for (int it = 0; it < iterations; ++it) {
    const Real mid = 0.5 * (lo + hi);
    (mexican_hat(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Index DualCouplingLayer::Net::size() const {
  const Index trunk = hidden * in + hidden + hidden * hidden + hidden;
  const Index t_head = out * hidden + out;
  return trunk + t_head + head_count() * (out * hidden + out);
}

void DualCouplingLayer::Net::forward(const Vector& theta, MatrixRef x,
                                     Cache& c) const {
  const Real* p = theta.data() + offset;
  Eigen::Map<const Matrix> w1(p, hidden, in);
  Eigen::Map<const Vector> b1(p + hidden * in, hidden);
  Eigen::Map<const Matrix> w2(p + hidden * in + hidden, hidden, hidden);
  Eigen::Map<const Vector> b2(p + hidden * in + hidden + hidden * hidden, hidden);
  const Index t_off = hidden * in + hidden + hidden * hidden + hidden;
  Eigen::Map<const Matrix> wt(p + t_off, out, hidden);
  Eigen::Map<const Vector> bt(p + t_off + out * hidden, out);
  const Real* head = p + t_off + out * hidden + out;

  c.a1 = (((w1 * x).colwise() + b1).array().tanh()).matrix();
  c.phi = (((w2 * c.a1).colwise() + b2).array().tanh()).matrix();
  c.t = (wt * c.phi).colwise() + bt;

  const Index batch = x.cols();
  if (head_kind == ScaleHead::MexicanHat) {
    c.logs = Matrix::Zero(out, batch);
    c.head_pre.assign(heads, Matrix());
    for (Index m = 0; m < heads; ++m) {
      Eigen::Map<const Matrix> wm(head + m * (out * hidden + out), out, hidden);
      Eigen::Map<const Vector> bm(head + m * (out * hidden + out) + out * hidden, out);
      Matrix pre = (wm * c.phi).colwise() + bm;
      for (Index b = 0; b < batch; ++b)
        for (Index j = 0; j < out; ++j) c.logs(j, b) += mexican_hat(pre(j, b));
      c.head_pre[m] = std::move(pre);
    }
    c.logs /= static_cast<Real>(heads);
  } else {
    Eigen::Map<const Matrix> ws(head, out, hidden);
    Eigen::Map<const Vector> bs(head + out * hidden, out);
    c.logs = (ws * c.phi).colwise() + bs;
  }
}

Matrix DualCouplingLayer::Net::backward(const Vector& theta, MatrixRef x,
                                        const Cache& c, MatrixRef g_logs,
                                        MatrixRef g_t,
                                        Eigen::Ref<Vector> g_theta) const {
  const Real* p = theta.data() + offset;
  Real* gp = g_theta.data() + offset;
  Eigen::Map<const Matrix> w1(p, hidden, in);
  Eigen::Map<const Matrix> w2(p + hidden * in + hidden, hidden, hidden);
  const Index t_off = hidden * in + hidden + hidden * hidden + hidden;
  Eigen::Map<const Matrix> wt(p + t_off, out, hidden);
  const Real* head = p + t_off + out * hidden + out;

  Eigen::Map<Matrix> gw1(gp, hidden, in);
  Eigen::Map<Vector> gb1(gp + hidden * in, hidden);
  Eigen::Map<Matrix> gw2(gp + hidden * in + hidden, hidden, hidden);
  Eigen::Map<Vector> gb2(gp + hidden * in + hidden + hidden * hidden, hidden);
  Eigen::Map<Matrix> gwt(gp + t_off, out, hidden);
  Eigen::Map<Vector> gbt(gp + t_off + out * hidden, out);
  Real* ghead = gp + t_off + out * hidden + out;

  gwt.noalias() += g_t * c.phi.transpose();
  gbt += g_t.rowwise().sum();
  Matrix g_phi = wt.transpose() * g_t;

  if (head_kind == ScaleHead::MexicanHat) {
    const Real inv_m = 1.0 / static_cast<Real>(heads);
    for (Index m = 0; m < heads; ++m) {
      Eigen::Map<const Matrix> wm(head + m * (out * hidden + out), out, hidden);
      Eigen::Map<Matrix> gwm(ghead + m * (out * hidden + out), out, hidden);
      Eigen::Map<Vector> gbm(ghead + m * (out * hidden + out) + out * hidden, out);
      Matrix psi(out, g_logs.cols());
      for (Index b = 0; b < g_logs.cols(); ++b)
        for (Index j = 0; j < out; ++j)
          psi(j, b) = inv_m * g_logs(j, b) * mexican_hat_deriv(c.head_pre[m](j, b));
      gwm.noalias() += psi * c.phi.transpose();
      gbm += psi.rowwise().sum();
      g_phi.noalias() += wm.transpose() * psi;
    }
  } else {
    Eigen::Map<const Matrix> ws(head, out, hidden);
    Eigen::Map<Matrix> gws(ghead, out, hidden);
    Eigen::Map<Vector> gbs(ghead + out * hidden, out);
    gws.noalias() += g_logs * c.phi.transpose();
    gbs += g_logs.rowwise().sum();
    g_phi.noalias() += ws.transpose() * g_logs;
  }

  Matrix ga2 = (g_phi.array() * (1.0 - c.phi.array().square())).matrix();
  gw2.noalias() += ga2 * c.a1.transpose();
  gb2 += ga2.rowwise().sum();
  Matrix ga1 = ((w2.transpose() * ga2).array() * (1.0 - c.a1.array().square())).matrix();
  gw1.noalias() += ga1 * x.transpose();
  gb1 += ga1.rowwise().sum();
  return w1.transpose() * ga1;
}

DualCouplingLayer::DualCouplingLayer(Index dim, Index split, Index hidden,
                                     Index heads, ScaleHead head_kind)
    : dim_(dim), split_(split), hidden_(hidden), heads_(heads), head_kind_(head_kind) {
  require(dim >= 2, "dual coupling: need dim >= 2");
  require(split >= 1 && split < dim, "dual coupling: split must lie in [1, dim)");
  require(hidden >= 1 && heads >= 1, "dual coupling: hidden and heads must be >= 1");

  net1_ = {dim - split, split, hidden, heads, head_kind, 0};
  net2_ = {split, dim - split, hidden, heads, head_kind, net1_.size()};
  theta_ = Vector::Zero(net1_.size() + net2_.size());
}

void DualCouplingLayer::randomize_trunk(Rng& rng) {
  for (const Net* net : {&net1_, &net2_}) {
    Real* p = theta_.data() + net->offset;
    Eigen::Map<Matrix> w1(p, net->hidden, net->in);
    Eigen::Map<Matrix> w2(p + net->hidden * net->in + net->hidden, net->hidden,
                          net->hidden);
    w1 = rng.gaussian_matrix(net->hidden, net->in) / std::sqrt(static_cast<Real>(net->in));
    w2 = rng.gaussian_matrix(net->hidden, net->hidden) /
         std::sqrt(static_cast<Real>(net->hidden));
  }
}

void DualCouplingLayer::randomize_all(Rng& rng, Real scale) {
  randomize_trunk(rng);
  for (const Net* net : {&net1_, &net2_}) {
    const Index t_off = net->hidden * net->in + net->hidden +
                        net->hidden * net->hidden + net->hidden;
    const Index tail = net->size() - t_off;
    Eigen::Map<Vector> rest(theta_.data() + net->offset + t_off, tail);
    rest = scale * rng.gaussian_vector(tail);
  }
}

void DualCouplingLayer::set_identity_init(Real beta) {
  for (const Net* net : {&net1_, &net2_}) {
    const Index t_off = net->hidden * net->in + net->hidden +
                        net->hidden * net->hidden + net->hidden;
    Real* p = theta_.data() + net->offset + t_off;
    Eigen::Map<Vector> t_block(p, net->out * net->hidden + net->out);
    t_block.setZero();
    Real* head = p + net->out * net->hidden + net->out;
    if (head_kind_ == ScaleHead::MexicanHat) {
      const Real bias = mexican_hat_bias_for(beta);
      for (Index m = 0; m < heads_; ++m) {
        Eigen::Map<Vector> block(head + m * (net->out * net->hidden + net->out),
                                 net->out * net->hidden + net->out);
        block.setZero();
        block.tail(net->out).setConstant(bias);
      }
    } else {
      // exp head: s == exp(bias), so bias = -log(beta) pins s at 1/beta.
      Eigen::Map<Vector> block(head, net->out * net->hidden + net->out);
      block.setZero();
      block.tail(net->out).setConstant(-std::log(beta));
    }
  }
}

void DualCouplingLayer::set_scale_bias(Real bias1, Real bias2) {
  const Real biases[2] = {bias1, bias2};
  int which = 0;
  for (const Net* net : {&net1_, &net2_}) {
    const Index t_off = net->hidden * net->in + net->hidden +
                        net->hidden * net->hidden + net->hidden;
    Real* head = theta_.data() + net->offset + t_off + net->out * net->hidden + net->out;
    for (Index m = 0; m < net->head_count(); ++m) {
      Eigen::Map<Vector> bm(head + m * (net->out * net->hidden + net->out) +
                                net->out * net->hidden,
                            net->out);
      bm.setConstant(biases[which]);
    }
    ++which;
  }
}

FlowResult DualCouplingLayer::forward(MatrixRef x) const {
  const Index r = split_;
  Net::Cache c1, c2;
  net1_.forward(theta_, x.bottomRows(dim_ - r), c1);

  FlowResult out;
  out.y.resize(dim_, x.cols());
  out.y.topRows(r) =
      (c1.logs.array().exp() * x.topRows(r).array()).matrix() + c1.t;
  net2_.forward(theta_, out.y.topRows(r), c2);
  out.y.bottomRows(dim_ - r) =
      (c2.logs.array().exp() * x.bottomRows(dim_ - r).array()).matrix() + c2.t;
  out.logdet = c1.logs.colwise().sum().transpose() + c2.logs.colwise().sum().transpose();
  return out;
}

FlowResult DualCouplingLayer::inverse(MatrixRef y) const {
  const Index r = split_;
  Net::Cache c1, c2;
  net2_.forward(theta_, y.topRows(r), c2);

  FlowResult out;
  out.y.resize(dim_, y.cols());
  out.y.bottomRows(dim_ - r) =
      ((y.bottomRows(dim_ - r) - c2.t).array() * (-c2.logs).array().exp()).matrix();
  net1_.forward(theta_, out.y.bottomRows(dim_ - r), c1);
  out.y.topRows(r) =
      ((y.topRows(r) - c1.t).array() * (-c1.logs).array().exp()).matrix();
  out.logdet =
      -(c1.logs.colwise().sum().transpose() + c2.logs.colwise().sum().transpose());
  return out;
}

Matrix DualCouplingLayer::backward(MatrixRef x, MatrixRef grad_y,
                                   VectorRef grad_logdet,
                                   Eigen::Ref<Vector> param_grad) const {
  const Index r = split_;
  const Index batch = x.cols();
  MatrixRef x1 = x.topRows(r);
  MatrixRef x2 = x.bottomRows(dim_ - r);

  Net::Cache c1, c2;
  net1_.forward(theta_, x2, c1);
  const Matrix s1 = c1.logs.array().exp().matrix();
  const Matrix y1 = (s1.array() * x1.array()).matrix() + c1.t;
  net2_.forward(theta_, y1, c2);
  const Matrix s2 = c2.logs.array().exp().matrix();

  // The layer's own logdet is sum(logs1) + sum(logs2), so grad_logdet lands
  // directly on the log-scale outputs.
  Matrix g_logs2 = (grad_y.bottomRows(dim_ - r).array() * x2.array() * s2.array()).matrix();
  for (Index b = 0; b < batch; ++b) g_logs2.col(b).array() += grad_logdet[b];
  Matrix g_y1 = grad_y.topRows(r) +
                net2_.backward(theta_, y1, c2, g_logs2, grad_y.bottomRows(dim_ - r),
                               param_grad);

  Matrix g_logs1 = (g_y1.array() * x1.array() * s1.array()).matrix();
  for (Index b = 0; b < batch; ++b) g_logs1.col(b).array() += grad_logdet[b];

  Matrix grad_x(dim_, batch);
  grad_x.topRows(r) = (s1.array() * g_y1.array()).matrix();
  grad_x.bottomRows(dim_ - r) =
      (s2.array() * grad_y.bottomRows(dim_ - r).array()).matrix() +
      net1_.backward(theta_, x2, c1, g_logs1, g_y1, param_grad);
  return grad_x;
}

}  // namespace flowdet
