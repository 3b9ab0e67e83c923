#pragma once

#include <cstdint>
#include <set>

#include "gapforge/dataset.hpp"
#include "gapforge/matrix.hpp"
#include "gapforge/nn.hpp"
#include "gapforge/rng.hpp"

namespace gapforge {

enum class PriorKind { kUniform, kGaussian };

struct Prior {
  PriorKind kind = PriorKind::kUniform;
  std::size_t dim = 8;
};

// Uniform(-1,1) or standard-normal latent draws, n x dim.
Matrix sample_prior(const Prior& prior, std::size_t n, SplittableRng& rng);

struct StepMetrics {
  int worker = 0;
  std::uint64_t update_index = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double d_real_acc = 0.0;
  double d_fake_acc = 0.0;
};

struct GanHyper {
  std::size_t hidden = 128;
  std::size_t prior_dim = 8;
  std::size_t batch = 64;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
};

// One generator/discriminator pair with optimizer state and private RNG
// stream. Exclusively owned by a single execution context.
struct GanWorker {
  int id = 0;
  ModelParams generator;       // prior.dim -> 2
  ModelParams discriminator;   // 2 -> 1 logit
  AdamState g_opt;
  AdamState d_opt;
  Prior prior;
  NoiseSchedule noise;
  SplittableRng rng;           // latent draws + input noise
  double clip_norm = 1.0;
  std::uint64_t update_index = 0;
  int disc_lineage = 0;
  std::set<int> seen_discriminators;  // always contains disc_lineage
};

// Four weight layers each, hidden layers batch-normalized with ReLU.
// The generator squashes to (0,1)^2 via a sigmoid output; the
// discriminator emits a raw logit (the sigmoid is fused into the losses).
ModelParams make_generator(const GanHyper& h, SplittableRng& rng);
ModelParams make_discriminator(const GanHyper& h, SplittableRng& rng);

// `base` is split into private init and training streams.
GanWorker make_worker(int id, const GanHyper& h, Prior prior,
                      NoiseSchedule noise, const SplittableRng& base);

struct DLossResult {
  double loss = 0.0;
  GradStore grads;       // discriminator only
  double real_acc = 0.0; // fraction of real inputs with logit >= 0
  double fake_acc = 0.0; // fraction of fake inputs with logit < 0
};

// Discriminator cost of the minimax objective (negated for minimization):
//   loss = -mean log sigma(D(x_real)) - mean log sigma(-D(x_fake)),
// computed with stable log-sigmoid. Train-mode forwards.
DLossResult d_loss_and_grads(GanWorker& w, const Matrix& x_real,
                             const Matrix& x_fake);

struct GLossResult {
  double loss = 0.0;
  GradStore grads;  // generator only
};

// Non-saturating generator cost: loss = -mean log sigma(D(G(z))).
// Gradients flow through the discriminator but only generator gradients
// are returned; discriminator parameters are untouched.
GLossResult g_loss_and_grads(GanWorker& w, const Matrix& z);

// One discriminator Adam step (with Gaussian input noise of scale
// noise_sigma on both real and fake discriminator inputs), then one
// generator Adam step on a fresh latent batch. Both gradient sets are
// norm-clipped. Throws NumericError (with worker id and update index) on
// non-finite losses.
StepMetrics train_update(GanWorker& w, const Matrix& real_batch,
                         double noise_sigma);

// Eval-mode discriminator cost against a fresh fake batch of equal size;
// no input noise, batchnorm uses running statistics.
double eval_d_cost(const GanWorker& w, const Matrix& data, SplittableRng& rng);

}  // namespace gapforge
