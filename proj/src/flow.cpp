#include <flowdet/flow.hpp>
#include <flowdet/normal.hpp>
#include <flowdet/rng.hpp>

#include <cmath>

namespace flowdet {

namespace {

Matrix apply_perm(MatrixRef x, const std::vector<Index>& perm) {
  if (perm.empty()) return x;
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(perm[i]);
  return out;
}

Matrix apply_perm_inverse(MatrixRef y, const std::vector<Index>& perm) {
  if (perm.empty()) return y;
  Matrix out(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) out.row(perm[i]) = y.row(i);
  return out;
}

}  // namespace

Index FlowModel::layer_count() const {
  Index n = 0;
  for (const auto& lv : levels_) n += static_cast<Index>(lv.layers.size());
  return n;
}

Layer& FlowModel::layer(Index i) {
  for (auto& lv : levels_) {
    if (i < static_cast<Index>(lv.layers.size())) return *lv.layers[i];
    i -= static_cast<Index>(lv.layers.size());
  }
  throw InvalidArgument("layer index out of range");
}

const Layer& FlowModel::layer(Index i) const {
  return const_cast<FlowModel*>(this)->layer(i);
}

std::vector<Index> FlowModel::latent_sizes() const {
  std::vector<Index> sizes;
  Index active = dim_;
  for (std::size_t l = 0; l + 1 < levels_.size(); ++l) {
    sizes.push_back(levels_[l].split_out);
    active -= levels_[l].split_out;
  }
  sizes.push_back(active);
  return sizes;
}

void FlowModel::validate() const {
  require(!levels_.empty(), "flow model: needs at least one level");
  Index active = dim_;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const Level& lv = levels_[l];
    for (const auto& layer : lv.layers)
      if (layer->dim() != active)
        throw DimensionMismatch("flow model: layer dim mismatch");
    if (!lv.split_perm.empty() &&
        static_cast<Index>(lv.split_perm.size()) != active)
      throw DimensionMismatch("flow model: split permutation size mismatch");
    const bool last = (l + 1 == levels_.size());
    if (last) {
      require(lv.split_out == 0, "flow model: last level must not split");
    } else {
      if (lv.split_out < 1 || lv.split_out >= active)
        throw InvalidArgument("flow model: split out of range [1, active)");
      active -= lv.split_out;
    }
  }
}

FlowModel::ForwardResult FlowModel::forward(MatrixRef x) const {
  if (x.rows() != dim_) throw DimensionMismatch("flow forward: dim mismatch");
  const Index batch = x.cols();

  Matrix active = x;
  Vector logdet = Vector::Zero(batch);
  Matrix z(dim_, batch);
  Index z_fill = 0;

  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const Level& lv = levels_[l];
    for (const auto& layer : lv.layers) {
      FlowResult r = layer->forward(active);
      active = std::move(r.y);
      logdet += r.logdet;
    }
    if (l + 1 < levels_.size()) {
      active = apply_perm(active, lv.split_perm);
      z.middleRows(z_fill, lv.split_out) = active.topRows(lv.split_out);
      z_fill += lv.split_out;
      active = active.bottomRows(active.rows() - lv.split_out).eval();
    }
  }
  z.middleRows(z_fill, active.rows()) = active;
  return {std::move(z), std::move(logdet)};
}

Matrix FlowModel::inverse(MatrixRef z) const {
  if (z.rows() != dim_) throw DimensionMismatch("flow inverse: dim mismatch");
  const std::vector<Index> sizes = latent_sizes();

  // Offsets of each level's latent block inside z.
  std::vector<Index> offset(sizes.size());
  for (std::size_t l = 1; l < sizes.size(); ++l)
    offset[l] = offset[l - 1] + sizes[l - 1];

  Matrix active = z.bottomRows(sizes.back());
  for (Index l = static_cast<Index>(levels_.size()) - 1; l >= 0; --l) {
    const Level& lv = levels_[l];
    if (l + 1 < static_cast<Index>(levels_.size())) {
      // Undo split l: stack this level's block back on top, then unpermute.
      Matrix full(lv.split_out + active.rows(), z.cols());
      full.topRows(lv.split_out) = z.middleRows(offset[l], lv.split_out);
      full.bottomRows(active.rows()) = active;
      active = apply_perm_inverse(full, lv.split_perm);
    }
    for (auto it = lv.layers.rbegin(); it != lv.layers.rend(); ++it)
      active = (*it)->inverse(active).y;
  }
  return active;
}

Vector FlowModel::base_log_density(MatrixRef z) const {
  const Index batch = z.cols();
  Vector logq(batch);
  if (base_ == BaseKind::Normal) {
    for (Index b = 0; b < batch; ++b)
      logq[b] = -0.5 * (static_cast<Real>(dim_) * kLogTwoPi + z.col(b).squaredNorm());
  } else {
    for (Index b = 0; b < batch; ++b) {
      for (Index i = 0; i < dim_; ++i)
        if (!(z(i, b) > 0.0 && z(i, b) < 1.0))
          throw OutOfSupport("uniform base: latent outside (0,1)^d");
      logq[b] = 0.0;
    }
  }
  return logq;
}

FlowModel multiscale_compose(
    Index dim, BaseKind base,
    std::vector<std::pair<std::vector<LayerPtr>, Index>> levels) {
  FlowModel model(dim, base);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    FlowModel::Level lv;
    lv.layers = std::move(levels[l].first);
    lv.split_out = (l + 1 == levels.size()) ? 0 : levels[l].second;
    model.levels().push_back(std::move(lv));
  }
  model.validate();
  return model;
}

Real log_likelihood(const FlowModel& model, VectorRef x) {
  require_finite(x, "log_likelihood input");
  const auto r = model.forward(x);
  return model.base_log_density(r.z)[0] + r.logdet[0];
}

Vector log_likelihood_batch(const FlowModel& model, MatrixRef rows) {
  const Matrix x = rows.transpose();
  const auto r = model.forward(x);
  return model.base_log_density(r.z) + r.logdet;
}

Real nll_bits_per_dim(Real ll_nats, Index d, Index bit_depth) {
  require(d >= 1, "bits/dim: d must be >= 1");
  return -ll_nats / (static_cast<Real>(d) * std::log(2.0)) +
         static_cast<Real>(bit_depth);
}

BackpropResult backprop(const FlowModel& model, MatrixRef batch,
                        const BackpropOptions& opts) {
  require_finite(batch, "backprop batch");
  const Index bsz = batch.rows();
  require(bsz >= 1, "backprop: empty batch");
  const Matrix x0 = batch.transpose();
  const Index nlayers = model.layer_count();
  const auto& levels = model.levels();

  // Forward pass caching every layer's input and output.
  std::vector<Matrix> in_cache(nlayers), out_cache(nlayers);
  Vector total_logdet = Vector::Zero(bsz);
  BackpropResult res;
  if (opts.want_stats) {
    res.layer_logdet = Vector::Zero(nlayers);
    res.layer_var = Vector::Zero(nlayers);
  }

  Matrix z(model.dim(), bsz);
  std::vector<Index> part_offset(levels.size(), 0);
  {
    Matrix active = x0;
    Index z_fill = 0, li = 0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      for (const auto& layer : levels[l].layers) {
        in_cache[li] = active;
        FlowResult r = layer->forward(active);
        active = r.y;
        out_cache[li] = std::move(r.y);
        total_logdet += r.logdet;
        if (opts.want_stats) {
          res.layer_logdet[li] = r.logdet.mean();
          const Real mean = out_cache[li].mean();
          res.layer_var[li] =
              out_cache[li].array().square().mean() - mean * mean;
        }
        ++li;
      }
      part_offset[l] = z_fill;
      if (l + 1 < levels.size()) {
        active = apply_perm(active, levels[l].split_perm);
        z.middleRows(z_fill, levels[l].split_out) = active.topRows(levels[l].split_out);
        z_fill += levels[l].split_out;
        active = active.bottomRows(active.rows() - levels[l].split_out).eval();
      }
    }
    z.middleRows(z_fill, active.rows()) = active;
  }

  const Vector logq = model.base_log_density(z);
  res.nll = -(logq + total_logdet).mean();

  // Seed: gradient of mean NLL w.r.t. z is -score(z)/B.
  const Real inv_b = 1.0 / static_cast<Real>(bsz);
  Matrix grad_z = Matrix::Zero(model.dim(), bsz);
  if (model.base() == BaseKind::Normal) grad_z = inv_b * z;
  const Vector grad_logdet = Vector::Constant(bsz, -inv_b);

  res.grads.per_layer.resize(nlayers);
  for (Index i = 0; i < nlayers; ++i)
    res.grads.per_layer[i] = Vector::Zero(model.layer(i).param_count());

  const Real pen_coef = 2.0 * opts.transport_lambda * inv_b;

  // Reverse sweep: undo splits, walk layers backwards.
  const Index last_level = static_cast<Index>(levels.size()) - 1;
  Matrix grad_active = grad_z.bottomRows(model.latent_sizes().back());
  Index li = nlayers;
  for (Index l = last_level; l >= 0; --l) {
    if (l < last_level) {
      const auto& lv = levels[l];
      Matrix full(lv.split_out + grad_active.rows(), bsz);
      full.topRows(lv.split_out) = grad_z.middleRows(part_offset[l], lv.split_out);
      full.bottomRows(grad_active.rows()) = grad_active;
      grad_active = apply_perm_inverse(full, lv.split_perm);
    }
    for (auto it = levels[l].layers.rbegin(); it != levels[l].layers.rend(); ++it) {
      --li;
      const Layer& layer = **it;
      const bool penalized = opts.transport_lambda > 0.0 &&
                             layer.kind() == LayerKind::RqActivation;
      if (penalized) {
        const Matrix disp = out_cache[li] - in_cache[li];
        res.penalty +=
            opts.transport_lambda * inv_b * disp.array().square().sum();
        grad_active += pen_coef * disp;
      }
      grad_active = layer.backward(in_cache[li], grad_active, grad_logdet,
                                   res.grads.per_layer[li]);
      if (penalized) grad_active -= pen_coef * (out_cache[li] - in_cache[li]);
    }
  }

  for (const Vector& g : res.grads.per_layer)
    if (!g.allFinite()) res.grads.finite = false;
  return res;
}

Matrix sample(const FlowModel& model, Index n, Real temperature,
              std::uint64_t seed) {
  require(temperature > 0, "sample: temperature must be positive");
  require(model.base() == BaseKind::Normal, "sample: requires the normal base");
  const std::vector<Index> sizes = model.latent_sizes();

  Rng rng(seed);
  Matrix z(model.dim(), n);
  for (Index b = 0; b < n; ++b) {
    Index off = 0;
    for (Index s : sizes) {
      for (Index i = 0; i < s; ++i) z(off + i, b) = temperature * rng.gaussian();
      off += s;
    }
  }
  return model.inverse(z).transpose();
}

Matrix perturb(const FlowModel& model, MatrixRef rows, Index k,
               PerturbMode mode, Real temperature, std::uint64_t seed) {
  require(model.base() == BaseKind::Normal, "perturb: requires the normal base");
  require(temperature > 0, "perturb: temperature must be positive");
  const std::vector<Index> sizes = model.latent_sizes();
  const Index nlevels = static_cast<Index>(sizes.size());
  if (k < 0 || k > nlevels)
    throw InvalidArgument("perturb: k must lie in [0, levels]");

  Matrix z = model.forward(rows.transpose()).z;
  Rng rng(seed);
  for (Index b = 0; b < z.cols(); ++b) {
    Index off = 0;
    for (Index l = 0; l < nlevels; ++l) {
      const bool resample =
          (mode == PerturbMode::KeepFirst) ? (l >= k) : (l < k);
      if (resample)
        for (Index i = 0; i < sizes[l]; ++i)
          z(off + i, b) = temperature * rng.gaussian();
      off += sizes[l];
    }
  }
  return model.inverse(z).transpose();
}

void block_init(InvConvLayer& conv, DualCouplingLayer& coupling,
                RqActivationLayer& act, Real beta) {
  require(beta > 0 && beta <= 1, "block_init: beta outside (0,1]");
  conv.weight().setIdentity();
  coupling.set_identity_init(beta);
  act.set_linear(beta);
}

}  // namespace flowdet
