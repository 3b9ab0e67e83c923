#include "gapforge/gan.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gapforge/errors.hpp"

namespace gapforge {

Matrix sample_prior(const Prior& prior, std::size_t n, SplittableRng& rng) {
  if (n == 0) throw std::invalid_argument("sample_prior: n must be >= 1");
  Matrix z(n, prior.dim);
  if (prior.kind == PriorKind::kUniform) {
    rng.fill_uniform(z.flat(), -1.0, 1.0);
  } else {
    rng.fill_normal(z.flat(), 0.0, 1.0);
  }
  return z;
}

ModelParams make_generator(const GanHyper& h, SplittableRng& rng) {
  const std::size_t hd = h.hidden;
  std::vector<LayerSpec> specs{
      {h.prior_dim, hd, true, Activation::kRelu},
      {hd, hd, true, Activation::kRelu},
      {hd, hd, true, Activation::kRelu},
      {hd, 2, false, Activation::kSigmoid},
  };
  return init_model(specs, rng);
}

ModelParams make_discriminator(const GanHyper& h, SplittableRng& rng) {
  const std::size_t hd = h.hidden;
  std::vector<LayerSpec> specs{
      {2, hd, true, Activation::kRelu},
      {hd, hd, true, Activation::kRelu},
      {hd, hd, true, Activation::kRelu},
      {hd, 1, false, Activation::kIdentity},
  };
  return init_model(specs, rng);
}

GanWorker make_worker(int id, const GanHyper& h, Prior prior,
                      NoiseSchedule noise, const SplittableRng& base) {
  GanWorker w;
  w.id = id;
  w.prior = prior;
  w.prior.dim = h.prior_dim;
  w.noise = noise;
  w.clip_norm = h.clip_norm;
  SplittableRng init_g = base.split(1);
  SplittableRng init_d = base.split(2);
  w.generator = make_generator(h, init_g);
  w.discriminator = make_discriminator(h, init_d);
  w.g_opt = AdamState::init(w.generator, h.lr, h.beta1, h.beta2, h.adam_eps);
  w.d_opt =
      AdamState::init(w.discriminator, h.lr, h.beta1, h.beta2, h.adam_eps);
  w.rng = base.split(3);
  w.disc_lineage = id;
  w.seen_discriminators = {id};
  return w;
}

namespace {

void require_data_cols(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.cols() != 2)
    throw std::invalid_argument(std::string(what) + ": expected nonempty n x 2");
}

}  // namespace

DLossResult d_loss_and_grads(GanWorker& w, const Matrix& x_real,
                             const Matrix& x_fake) {
  require_data_cols(x_real, "d_loss_and_grads real");
  require_data_cols(x_fake, "d_loss_and_grads fake");

  ForwardCache cache_r, cache_f;
  const Matrix a_r =
      mlp_forward(w.discriminator, x_real, RunMode::kTrain, &cache_r);
  const Matrix a_f =
      mlp_forward(w.discriminator, x_fake, RunMode::kTrain, &cache_f);

  const double nr = static_cast<double>(a_r.rows());
  const double nf = static_cast<double>(a_f.rows());
  DLossResult res;
  Matrix da_r(a_r.rows(), 1), da_f(a_f.rows(), 1);
  for (std::size_t i = 0; i < a_r.rows(); ++i) {
    const double a = a_r(i, 0);
    res.loss -= log_sigmoid(a) / nr;
    da_r(i, 0) = -sigmoid(-a) / nr;  // d(-log sigma(a))/da
    if (a >= 0.0) res.real_acc += 1.0 / nr;
  }
  for (std::size_t i = 0; i < a_f.rows(); ++i) {
    const double a = a_f(i, 0);
    res.loss -= log_sigmoid(-a) / nf;
    da_f(i, 0) = sigmoid(a) / nf;  // d(-log sigma(-a))/da
    if (a < 0.0) res.fake_acc += 1.0 / nf;
  }

  BackwardResult br = mlp_backward(w.discriminator, cache_r, da_r);
  BackwardResult bf = mlp_backward(w.discriminator, cache_f, da_f);
  br.grads.add(bf.grads);
  res.grads = std::move(br.grads);
  return res;
}

GLossResult g_loss_and_grads(GanWorker& w, const Matrix& z) {
  if (z.rows() == 0 || z.cols() != w.prior.dim)
    throw std::invalid_argument("g_loss_and_grads: z width != prior dim");

  ForwardCache cache_g, cache_d;
  const Matrix x_fake = mlp_forward(w.generator, z, RunMode::kTrain, &cache_g);
  const Matrix a = mlp_forward(w.discriminator, x_fake, RunMode::kTrain, &cache_d);

  const double n = static_cast<double>(a.rows());
  GLossResult res;
  Matrix da(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    res.loss -= log_sigmoid(a(i, 0)) / n;
    da(i, 0) = -sigmoid(-a(i, 0)) / n;
  }

  const BackwardResult bd = mlp_backward(w.discriminator, cache_d, da);
  BackwardResult bg = mlp_backward(w.generator, cache_g, bd.grad_in);
  res.grads = std::move(bg.grads);
  return res;
}

StepMetrics train_update(GanWorker& w, const Matrix& real_batch,
                         double noise_sigma) {
  if (real_batch.rows() < 2)
    throw std::invalid_argument("train_update: batch size must be >= 2");
  const std::size_t n = real_batch.rows();

  // discriminator step
  Matrix z = sample_prior(w.prior, n, w.rng);
  Matrix x_fake = mlp_forward(w.generator, z, RunMode::kTrain);
  Matrix x_real = real_batch;
  if (noise_sigma > 0.0) {
    for (double& v : x_real.flat()) v += noise_sigma * w.rng.normal();
    for (double& v : x_fake.flat()) v += noise_sigma * w.rng.normal();
  }
  DLossResult d = d_loss_and_grads(w, x_real, x_fake);
  if (!std::isfinite(d.loss))
    throw NumericError("non-finite d_loss at worker " + std::to_string(w.id) +
                       " update " + std::to_string(w.update_index));
  clip_grad_norm(d.grads, w.clip_norm);
  adam_step(w.discriminator, d.grads, w.d_opt);

  // generator step against the updated discriminator, fresh latents
  Matrix z2 = sample_prior(w.prior, n, w.rng);
  GLossResult g = g_loss_and_grads(w, z2);
  if (!std::isfinite(g.loss))
    throw NumericError("non-finite g_loss at worker " + std::to_string(w.id) +
                       " update " + std::to_string(w.update_index));
  clip_grad_norm(g.grads, w.clip_norm);
  adam_step(w.generator, g.grads, w.g_opt);

  StepMetrics m;
  m.worker = w.id;
  m.update_index = w.update_index++;
  m.d_loss = d.loss;
  m.g_loss = g.loss;
  m.d_real_acc = d.real_acc;
  m.d_fake_acc = d.fake_acc;
  return m;
}

double eval_d_cost(const GanWorker& w, const Matrix& data, SplittableRng& rng) {
  require_data_cols(data, "eval_d_cost");
  const Matrix z = sample_prior(w.prior, data.rows(), rng);
  const Matrix x_fake = mlp_eval(w.generator, z);
  const Matrix a_r = mlp_eval(w.discriminator, data);
  const Matrix a_f = mlp_eval(w.discriminator, x_fake);
  const double n = static_cast<double>(data.rows());
  double cost = 0.0;
  for (std::size_t i = 0; i < a_r.rows(); ++i)
    cost -= log_sigmoid(a_r(i, 0)) / n;
  for (std::size_t i = 0; i < a_f.rows(); ++i)
    cost -= log_sigmoid(-a_f(i, 0)) / n;
  return cost;
}

}  // namespace gapforge
