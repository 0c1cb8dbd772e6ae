// Maximum-likelihood training with Adamax and an exponentially decaying
// learning rate, per-step diagnostics, the Lipschitz ablations, toy-data
// generators and dequantization.
#pragma once

#include <flowdet/flow.hpp>
#include <flowdet/trace.hpp>

#include <cstdint>
#include <string>

namespace flowdet {

enum class Ablation {
  None,
  InsertTanh,          // contractive tanh between coupling and activation
  InsertNormalCdf,     // same with the normal CDF
  L2Transport,         // transport cost on the activation outputs
  UnconstrainedScale,  // exp scale head instead of the Mexican-hat mixture
};

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& name);

struct TrainConfig {
  Index steps = 5000;
  Index batch = 256;
  Real lr_start = 0.01;
  Real lr_end = 0.001;
  Real decay_steps = 1000;
  Real decay_rate = 0.98;
  Real beta = 0.7;  // blockwise volume-preserving init slope
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::None;
  Real transport_lambda = 0.0;
  Index bit_depth = 0;          // 0 for continuous data
  Real holdout_fraction = 0.1;  // last rows held out from minibatching
};

// lr(t) = max(lr_end, lr_start * decay_rate^(t / decay_steps)), continuous
// exponent.
Real lr_schedule(const TrainConfig& cfg, Index step);

struct AdamaxState {
  Vector m, u;  // first moment and infinity-norm accumulator
  long t = 0;
};

// Adamax update with bias-corrected first moment:
//   m <- b1 m + (1-b1) g,  u <- max(b2 u, |g|),
//   theta <- theta - lr/(1-b1^t) * m / (u + eps).
void adamax_step(Eigen::Ref<Vector> params, VectorRef grad, AdamaxState& state,
                 Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);

enum class TrainStatus { Completed, Diverged };

// Minibatch MLE loop. Uses the first (1 - holdout_fraction) rows of data
// with seeded epoch shuffling; appends one trace record per step (values
// measured before the update, so step 0 reflects the initialization).
// Non-finite gradients skip the update and log an event; ten consecutive
// non-finite NLL evaluations end the run as Diverged with a partial trace.
TrainStatus train(FlowModel& model, const TrainConfig& cfg, MatrixRef data,
                  TrainTrace& trace);

// Number of leading rows train() draws minibatches from.
Index train_rows(const TrainConfig& cfg, Index total_rows);

// Mean log-likelihood over rows, chunked with a fixed chunk size and
// reduced in chunk order, so the result is bit-identical for any worker
// count. threads <= 0 reads FLOWDET_THREADS (default 1).
Real mean_log_likelihood(const FlowModel& model, MatrixRef rows, int threads = -1);

// Seeded 2D toy distributions: gaussian | two_moons | rings | checkerboard
// | spiral. Zero-mean, unit-ish scale, rows are points.
Matrix toy_dataset(const std::string& name, Index n, std::uint64_t seed);

// Ring radii and half-width used by the rings generator (for scripted
// checks against the construction).
struct RingsSpec {
  Real r1 = 0.9, r2 = 1.8, half_width = 0.08;
};
RingsSpec rings_spec();

// Smooth random-blob images quantized to [0, 2^bits); one image per row,
// single channel, row-major pixels.
Matrix synthetic_images(Index n, Index h, Index w, Index bits,
                        std::uint64_t seed);

// x = (v + u) / 2^bits with u ~ U[0,1) seeded; v must be integers in
// [0, 2^bits). bits in [1, 8].
Vector dequantize(VectorRef raw, Index bits, std::uint64_t seed);
Matrix dequantize_rows(MatrixRef raw, Index bits, std::uint64_t seed);

// lambda * mean_b ||h_out(:,b) - h_in(:,b)||^2 (columns are points).
Real l2_transport_penalty(MatrixRef h_in, MatrixRef h_out, Real lambda);

}  // namespace flowdet
