#include <flowdet/train.hpp>

#include <flowdet/rng.hpp>

#include <cmath>
#include <atomic>
#include <cstdlib>
#include <numeric>
#include <thread>
#include <vector>

namespace flowdet {

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::InsertTanh: return "insert_tanh";
    case Ablation::InsertNormalCdf: return "insert_normal_cdf";
    case Ablation::L2Transport: return "l2_transport";
    case Ablation::UnconstrainedScale: return "unconstrained_scale";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& name) {
  if (name == "none") return Ablation::None;
  if (name == "insert_tanh") return Ablation::InsertTanh;
  if (name == "insert_normal_cdf") return Ablation::InsertNormalCdf;
  if (name == "l2_transport") return Ablation::L2Transport;
  if (name == "unconstrained_scale") return Ablation::UnconstrainedScale;
  throw InvalidArgument("unknown ablation: " + name);
}

Real lr_schedule(const TrainConfig& cfg, Index step) {
  const Real lr = cfg.lr_start *
                  std::pow(cfg.decay_rate, static_cast<Real>(step) / cfg.decay_steps);
  return std::max(cfg.lr_end, lr);
}

void adamax_step(Eigen::Ref<Vector> params, VectorRef grad, AdamaxState& state,
                 Real lr, Real beta1, Real beta2, Real eps) {
  require(params.size() == grad.size(), "adamax: shape mismatch");
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.u = Vector::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.u = (beta2 * state.u).cwiseMax(grad.cwiseAbs());
  const Real correction = 1.0 - std::pow(beta1, static_cast<Real>(state.t));
  params -= (lr / correction) * (state.m.array() / (state.u.array() + eps)).matrix();
}

Index train_rows(const TrainConfig& cfg, Index total_rows) {
  const Index held = static_cast<Index>(std::floor(cfg.holdout_fraction *
                                                   static_cast<Real>(total_rows)));
  return std::max<Index>(1, total_rows - held);
}

TrainStatus train(FlowModel& model, const TrainConfig& cfg, MatrixRef data,
                  TrainTrace& trace) {
  require(data.cols() == model.dim(), "train: dataset dimension mismatch");
  const Index n = train_rows(cfg, data.rows());
  const Index batch = std::min(cfg.batch, n);
  require(batch >= 1, "train: empty batch");

  BackpropOptions opts;
  opts.want_stats = true;
  if (cfg.ablation == Ablation::L2Transport) opts.transport_lambda = cfg.transport_lambda;

  const Index nlayers = model.layer_count();
  std::vector<AdamaxState> states(nlayers);

  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  shuffle_rng.shuffle(order);
  Index cursor = 0;

  Matrix minibatch(batch, model.dim());
  Index bad_nll_streak = 0;

  for (Index step = 0; step < cfg.steps; ++step) {
    for (Index b = 0; b < batch; ++b) {
      if (cursor == n) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      minibatch.row(b) = data.row(order[cursor++]);
    }

    const BackpropResult res = backprop(model, minibatch, opts);

    StepRecord rec;
    rec.nll_nats = res.nll;
    rec.nll_bpd = nll_bits_per_dim(-res.nll, model.dim(), cfg.bit_depth);
    rec.logdet = res.layer_logdet;
    rec.var = res.layer_var;
    rec.gradnorm = Vector::Zero(nlayers);
    for (Index i = 0; i < nlayers; ++i)
      rec.gradnorm[i] = res.grads.per_layer[i].norm();
    trace.steps.push_back(std::move(rec));

    if (!std::isfinite(res.nll)) {
      trace.events.emplace_back(step, "non-finite NLL");
      if (++bad_nll_streak >= 10) {
        trace.events.emplace_back(step, "diverged: ten consecutive non-finite NLL");
        return TrainStatus::Diverged;
      }
      continue;  // never step on a broken objective
    }
    bad_nll_streak = 0;

    if (!res.grads.finite) {
      trace.events.emplace_back(step, "non-finite gradient, step skipped");
      continue;
    }

    const Real lr = lr_schedule(cfg, step);
    for (Index i = 0; i < nlayers; ++i)
      if (model.layer(i).param_count() > 0)
        adamax_step(model.layer(i).params(), res.grads.per_layer[i], states[i], lr);
  }
  return TrainStatus::Completed;
}

Real mean_log_likelihood(const FlowModel& model, MatrixRef rows, int threads) {
  require(rows.rows() >= 1, "mean_log_likelihood: empty dataset");
  if (threads <= 0) {
    threads = 1;
    if (const char* env = std::getenv("FLOWDET_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) threads = v;
    }
  }

  // Fixed chunking and in-order reduction keep the sum bit-identical for
  // any worker count.
  constexpr Index kChunk = 512;
  const Index nchunks = (rows.rows() + kChunk - 1) / kChunk;
  std::vector<Real> partial(nchunks, 0.0);

  auto work = [&](Index c) {
    const Index lo = c * kChunk;
    const Index len = std::min(kChunk, rows.rows() - lo);
    partial[c] = log_likelihood_batch(model, rows.middleRows(lo, len)).sum();
  };

  const Index workers = std::min<Index>(threads, nchunks);
  if (workers <= 1) {
    for (Index c = 0; c < nchunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<Index> next{0};
    for (Index w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (Index c = next.fetch_add(1); c < nchunks; c = next.fetch_add(1)) work(c);
      });
    for (auto& t : pool) t.join();
  }

  Real sum = 0.0;
  for (Real p : partial) sum += p;
  return sum / static_cast<Real>(rows.rows());
}

RingsSpec rings_spec() { return {}; }

Matrix toy_dataset(const std::string& name, Index n, std::uint64_t seed) {
  require(n >= 1, "toy_dataset: n must be >= 1");
  Rng rng(seed);
  Matrix out(n, 2);

  if (name == "gaussian") {
    for (Index i = 0; i < n; ++i) {
      out(i, 0) = rng.gaussian();
      out(i, 1) = rng.gaussian();
    }
  } else if (name == "two_moons") {
    // Two half circles, then centered and lightly blurred.
    for (Index i = 0; i < n; ++i) {
      const bool upper = rng.uniform() < 0.5;
      const Real t = rng.uniform(0.0, M_PI);
      Real x = upper ? std::cos(t) : 1.0 - std::cos(t);
      Real y = upper ? std::sin(t) : 0.5 - std::sin(t);
      out(i, 0) = 1.1 * (x - 0.5 + 0.08 * rng.gaussian());
      out(i, 1) = 1.1 * (y - 0.25 + 0.08 * rng.gaussian());
    }
  } else if (name == "rings") {
    const RingsSpec spec = rings_spec();
    for (Index i = 0; i < n; ++i) {
      const Real rc = (rng.uniform() < 0.5) ? spec.r1 : spec.r2;
      const Real r = rc + rng.uniform(-spec.half_width, spec.half_width);
      const Real a = rng.uniform(0.0, 2.0 * M_PI);
      out(i, 0) = r * std::cos(a);
      out(i, 1) = r * std::sin(a);
    }
  } else if (name == "checkerboard") {
    // Unit cells on [-2,2]^2 with alternating occupancy, scaled to unit-ish
    // variance.
    for (Index i = 0; i < n; ++i) {
      const Index col = rng.below(4);
      const Index row2 = rng.below(2);
      const Index row = 2 * row2 + (col % 2) - 2;
      out(i, 0) = 0.866 * (static_cast<Real>(col) - 2.0 + rng.uniform());
      out(i, 1) = 0.866 * (static_cast<Real>(row) + rng.uniform());
    }
  } else if (name == "spiral") {
    // Two interleaved arms; symmetric, so the mean is zero.
    for (Index i = 0; i < n; ++i) {
      const Real arm = (rng.uniform() < 0.5) ? 0.0 : M_PI;
      const Real t = 3.0 * M_PI * std::sqrt(rng.uniform());
      const Real r = 2.0 * t / (3.0 * M_PI);
      out(i, 0) = r * std::cos(t + arm) + 0.05 * rng.gaussian();
      out(i, 1) = r * std::sin(t + arm) + 0.05 * rng.gaussian();
    }
  } else {
    throw InvalidArgument("unknown toy dataset: " + name);
  }
  return out;
}

Matrix synthetic_images(Index n, Index h, Index w, Index bits,
                        std::uint64_t seed) {
  require(n >= 1 && h >= 2 && w >= 2, "synthetic_images: bad shape");
  require(bits >= 1 && bits <= 8, "synthetic_images: bits in [1,8]");
  Rng rng(seed);
  const Real levels = static_cast<Real>(Index{1} << bits);
  Matrix out(n, h * w);
  for (Index img = 0; img < n; ++img) {
    // Two or three soft blobs over a dim background.
    const Index nblobs = 2 + rng.below(2);
    Vector cx(nblobs), cy(nblobs), sg(nblobs), amp(nblobs);
    for (Index b = 0; b < nblobs; ++b) {
      cx[b] = rng.uniform(0.15, 0.85) * static_cast<Real>(w - 1);
      cy[b] = rng.uniform(0.15, 0.85) * static_cast<Real>(h - 1);
      sg[b] = rng.uniform(0.08, 0.22) * static_cast<Real>(std::min(h, w));
      amp[b] = rng.uniform(0.4, 0.9);
    }
    const Real bg = rng.uniform(0.05, 0.2);
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        Real v = bg;
        for (Index b = 0; b < nblobs; ++b) {
          const Real dx = static_cast<Real>(j) - cx[b];
          const Real dy = static_cast<Real>(i) - cy[b];
          v += amp[b] * std::exp(-(dx * dx + dy * dy) / (2.0 * sg[b] * sg[b]));
        }
        v = std::min(v, 0.999);
        out(img, i * w + j) = std::floor(v * levels);
      }
  }
  return out;
}

Vector dequantize(VectorRef raw, Index bits, std::uint64_t seed) {
  require(bits >= 1 && bits <= 8, "dequantize: bits in [1,8]");
  const Real levels = static_cast<Real>(Index{1} << bits);
  Rng rng(seed);
  Vector out(raw.size());
  for (Index i = 0; i < raw.size(); ++i) {
    const Real v = raw[i];
    if (!(v >= 0.0 && v < levels && v == std::floor(v)))
      throw InvalidArgument("dequantize: value outside the integer grid");
    out[i] = (v + rng.uniform()) / levels;
  }
  return out;
}

Matrix dequantize_rows(MatrixRef raw, Index bits, std::uint64_t seed) {
  Matrix out(raw.rows(), raw.cols());
  Rng rng(seed);
  const Real levels = static_cast<Real>(Index{1} << bits);
  require(bits >= 1 && bits <= 8, "dequantize: bits in [1,8]");
  for (Index i = 0; i < raw.rows(); ++i)
    for (Index j = 0; j < raw.cols(); ++j) {
      const Real v = raw(i, j);
      if (!(v >= 0.0 && v < levels && v == std::floor(v)))
        throw InvalidArgument("dequantize: value outside the integer grid");
      out(i, j) = (v + rng.uniform()) / levels;
    }
  return out;
}

Real l2_transport_penalty(MatrixRef h_in, MatrixRef h_out, Real lambda) {
  require(lambda >= 0, "transport penalty: lambda must be >= 0");
  require(h_in.rows() == h_out.rows() && h_in.cols() == h_out.cols(),
          "transport penalty: shape mismatch");
  if (lambda == 0.0) return 0.0;
  return lambda * (h_out - h_in).colwise().squaredNorm().mean();
}

}  // namespace flowdet
