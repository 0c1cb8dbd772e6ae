// Flow composition: ordered invertible layers in a multi-scale arrangement
// that factors dimensions out between levels, exact log-likelihood under a
// standard-normal or uniform base, the analytic reverse-mode recursion over
// the whole composition, seeded sampling, and the latent perturbation
// protocol.
#pragma once

#include <flowdet/layer.hpp>
#include <flowdet/layers/coupling.hpp>
#include <flowdet/layers/inv_conv.hpp>
#include <flowdet/layers/rq_activation.hpp>

#include <cstdint>
#include <vector>

namespace flowdet {

enum class BaseKind { Normal, Uniform };

class FlowModel {
 public:
  struct Level {
    std::vector<LayerPtr> layers;
    Index split_out = 0;            // dims factored out after this level
    std::vector<Index> split_perm;  // optional gather applied before the split
  };

  FlowModel(Index dim, BaseKind base) : dim_(dim), base_(base) {}

  Index dim() const { return dim_; }
  BaseKind base() const { return base_; }
  void set_base(BaseKind b) { base_ = b; }

  std::vector<Level>& levels() { return levels_; }
  const std::vector<Level>& levels() const { return levels_; }

  // Flattened layer view in execution order.
  Index layer_count() const;
  Layer& layer(Index i);
  const Layer& layer(Index i) const;

  // Latent block sizes in level order; the last entry is what remains after
  // all splits. Sizes sum to dim().
  std::vector<Index> latent_sizes() const;

  struct ForwardResult {
    Matrix z;       // d x B latents, level blocks stacked in order
    Vector logdet;  // per point
  };

  // Columns are points.
  ForwardResult forward(MatrixRef x) const;
  Matrix inverse(MatrixRef z) const;

  // log q(z) of the base distribution, per column. Throws OutOfSupport when
  // the uniform base sees a latent outside (0,1)^d.
  Vector base_log_density(MatrixRef z) const;

  // Validates structure: split sizes in range, layer dims consistent.
  void validate() const;

 private:
  Index dim_;
  BaseKind base_;
  std::vector<Level> levels_;
};

// Builds a model from per-level (layers, split_out) pairs; split_perm stays
// empty (prefix splits). Throws InvalidArgument on an out-of-range split.
FlowModel multiscale_compose(
    Index dim, BaseKind base,
    std::vector<std::pair<std::vector<LayerPtr>, Index>> levels);

// Exact log-likelihood in nats. The batch variant takes rows as points.
Real log_likelihood(const FlowModel& model, VectorRef x);
Vector log_likelihood_batch(const FlowModel& model, MatrixRef rows);

// bits/dim for data dequantized to [0,1]^d at the given bit depth;
// ll_nats is the log-likelihood (not its negation).
Real nll_bits_per_dim(Real ll_nats, Index d, Index bit_depth);

struct GradientSet {
  std::vector<Vector> per_layer;  // matches each layer's parameter block
  bool finite = true;
};

struct BackpropOptions {
  Real transport_lambda = 0.0;  // L2 transport cost at activation outputs
  bool want_stats = false;      // per-layer logdet / output variance
};

struct BackpropResult {
  Real nll = 0.0;      // mean negative log-likelihood over the batch (nats)
  Real penalty = 0.0;  // transport penalty value
  GradientSet grads;   // gradient of (mean NLL + penalty)
  Vector layer_logdet; // batch-mean logdet per layer (stats only)
  Vector layer_var;    // pooled output variance per layer (stats only)
};

// Analytic reverse-mode pass over the whole composition. The recursion seed
// is the base-density score: zero for the uniform base, -z for the standard
// normal one. batch has rows as points.
BackpropResult backprop(const FlowModel& model, MatrixRef batch,
                        const BackpropOptions& opts = {});

// Draws n samples (rows) with latents z ~ N(0, temperature^2 I), filled
// level block by level block; requires the standard-normal base.
Matrix sample(const FlowModel& model, Index n, Real temperature,
              std::uint64_t seed);

enum class PerturbMode { KeepFirst, ResampleFirst };

// Encodes each row, keeps or resamples whole latent levels (k counts levels
// from the first), decodes back. Requires the standard-normal base.
Matrix perturb(const FlowModel& model, MatrixRef rows, Index k,
               PerturbMode mode, Real temperature, std::uint64_t seed);

// Volume-preserving block start: convolution weight I, coupling scales
// pinned at 1/beta through the common head bias, activation linear with
// slope beta. The composed block is the identity and its total log-det 0.
void block_init(InvConvLayer& conv, DualCouplingLayer& coupling,
                RqActivationLayer& act, Real beta);

}  // namespace flowdet
