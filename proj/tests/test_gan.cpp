#include "doctest.h"

#include <cmath>

#include "gapforge/checkpoint.hpp"
#include "gapforge/dataset.hpp"
#include "gapforge/errors.hpp"
#include "gapforge/gan.hpp"

using namespace gapforge;

namespace {

constexpr double kLn2 = 0.6931471805599453;

ModelParams single_layer(std::size_t in, std::size_t out, double w0, double b0,
                         Activation act = Activation::kIdentity) {
  ModelParams p;
  LayerParams l;
  l.spec = {in, out, false, act};
  l.w = Matrix(out, in, w0);
  l.b.assign(out, b0);
  p.layers.push_back(l);
  return p;
}

GanWorker tiny_worker(std::uint64_t seed, std::size_t hidden = 16,
                      PriorKind kind = PriorKind::kUniform) {
  GanHyper h;
  h.hidden = hidden;
  h.prior_dim = 4;
  Prior prior{kind, 4};
  return make_worker(0, h, prior, NoiseSchedule{0.0, 0.5},
                     SplittableRng(seed, 100));
}

// trainable tensors only; running statistics are allowed to move
bool trainable_equal(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].w != b.layers[i].w || a.layers[i].b != b.layers[i].b ||
        a.layers[i].bn_gamma != b.layers[i].bn_gamma ||
        a.layers[i].bn_beta != b.layers[i].bn_beta)
      return false;
  return true;
}

}  // namespace

TEST_CASE("uniform prior stays inside (-1,1)") {
  SplittableRng rng(1, 0);
  const Matrix z = sample_prior({PriorKind::kUniform, 8}, 1000, rng);
  CHECK(z.rows() == 1000);
  CHECK(z.cols() == 8);
  for (double v : z.flat()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("gaussian prior matches large-sample statistics per dimension") {
  SplittableRng rng(2, 0);
  const Matrix z = sample_prior({PriorKind::kGaussian, 3}, 100000, rng);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) mean += z(i, j);
    mean /= static_cast<double>(z.rows());
    double var = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i)
      var += (z(i, j) - mean) * (z(i, j) - mean);
    var /= static_cast<double>(z.rows());
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.02);
  }
}

TEST_CASE("prior draws are reproducible from the stream position") {
  SplittableRng a(3, 5), b(3, 5);
  const Matrix z1 = sample_prior({PriorKind::kGaussian, 4}, 32, a);
  const Matrix z2 = sample_prior({PriorKind::kGaussian, 4}, 32, b);
  CHECK(z1 == z2);
}

TEST_CASE("d_loss at logit zero equals 2 ln 2, g_loss equals ln 2") {
  GanWorker w = tiny_worker(4);
  w.discriminator = single_layer(2, 1, 0.0, 0.0);
  w.d_opt = AdamState::init(w.discriminator);

  Matrix real(8, 2, 0.3), fake(8, 2, 0.7);
  const DLossResult d = d_loss_and_grads(w, real, fake);
  CHECK(d.loss == doctest::Approx(2 * kLn2).epsilon(1e-12));
  // logit 0 counts as "real": all fakes fooled, every real correct
  CHECK(d.real_acc == 1.0);
  CHECK(d.fake_acc == 0.0);

  const Matrix z = sample_prior(w.prior, 8, w.rng);
  const GLossResult g = g_loss_and_grads(w, z);
  CHECK(g.loss == doctest::Approx(kLn2).epsilon(1e-12));
}

TEST_CASE("a perfect discriminator drives the loss to zero") {
  GanWorker w = tiny_worker(5);
  ModelParams d = single_layer(2, 1, 0.0, 0.0);
  d.layers[0].w(0, 0) = 100.0;  // logit = 100 * x0
  w.discriminator = d;

  Matrix real(4, 2), fake(4, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    real(i, 0) = 1.0;
    fake(i, 0) = -1.0;
  }
  const DLossResult res = d_loss_and_grads(w, real, fake);
  CHECK(res.loss < 1e-12);
  CHECK(res.real_acc == 1.0);
  CHECK(res.fake_acc == 1.0);
}

TEST_CASE("losses stay finite for extreme logits") {
  GanWorker w = tiny_worker(6);
  ModelParams d = single_layer(2, 1, 0.0, 0.0);
  d.layers[0].w(0, 0) = 1e6;
  w.discriminator = d;
  Matrix real(4, 2), fake(4, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    real(i, 0) = -1.0;  // massively wrong side
    fake(i, 0) = 1.0;
  }
  const DLossResult res = d_loss_and_grads(w, real, fake);
  CHECK(std::isfinite(res.loss));
  CHECK(res.loss > 1e5);  // about 2e6, never -inf or nan
}

TEST_CASE("discriminator gradients pass the finite-difference oracle") {
  for (std::uint64_t seed : {10ull, 11ull, 12ull}) {
    GanWorker w = tiny_worker(seed, 10);
    SplittableRng data_rng(seed, 55);
    Matrix real(8, 2), fake(8, 2);
    data_rng.fill_uniform(real.flat(), 0.0, 1.0);
    data_rng.fill_uniform(fake.flat(), 0.0, 1.0);

    GanWorker probe = w;
    const DLossResult res = d_loss_and_grads(probe, real, fake);
    const double max_rel = grad_check(
        w.discriminator,
        [&](const ModelParams& q) {
          GanWorker tmp = w;
          tmp.discriminator = q;
          return d_loss_and_grads(tmp, real, fake).loss;
        },
        res.grads, 1e-5);
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("generator gradients pass the oracle with the discriminator frozen") {
  for (std::uint64_t seed : {20ull, 21ull, 22ull}) {
    GanWorker w = tiny_worker(seed, 10);
    SplittableRng z_rng(seed, 56);
    const Matrix z = sample_prior(w.prior, 8, z_rng);

    GanWorker probe = w;
    const GLossResult res = g_loss_and_grads(probe, z);
    const ModelParams disc_before = w.discriminator;
    const double max_rel = grad_check(
        w.generator,
        [&](const ModelParams& q) {
          GanWorker tmp = w;
          tmp.generator = q;
          return g_loss_and_grads(tmp, z).loss;
        },
        res.grads, 1e-5);
    CHECK(max_rel < 1e-4);
    CHECK(trainable_equal(probe.discriminator, disc_before));
  }
}

TEST_CASE("train_update is deterministic and touches both players") {
  SplittableRng data_rng(30, 0);
  Matrix batch(16, 2);
  data_rng.fill_uniform(batch.flat(), 0.0, 1.0);

  GanWorker a = tiny_worker(31);
  GanWorker b = tiny_worker(31);
  const ModelParams g_before = a.generator;
  const ModelParams d_before = a.discriminator;

  const StepMetrics ma = train_update(a, batch, 0.0);
  const StepMetrics mb = train_update(b, batch, 0.0);

  CHECK(serialize_params(a.generator) == serialize_params(b.generator));
  CHECK(serialize_params(a.discriminator) == serialize_params(b.discriminator));
  CHECK(ma.d_loss == mb.d_loss);
  CHECK(ma.g_loss == mb.g_loss);
  CHECK(ma.update_index == 0);
  CHECK(a.update_index == 1);

  CHECK_FALSE(trainable_equal(a.generator, g_before));
  CHECK_FALSE(trainable_equal(a.discriminator, d_before));
  CHECK(ma.d_real_acc >= 0.0);
  CHECK(ma.d_real_acc <= 1.0);
  CHECK(ma.d_fake_acc >= 0.0);
  CHECK(ma.d_fake_acc <= 1.0);
}

TEST_CASE("train_update with noise still reproduces bit-exactly") {
  SplittableRng data_rng(32, 0);
  Matrix batch(8, 2);
  data_rng.fill_uniform(batch.flat(), 0.0, 1.0);
  GanWorker a = tiny_worker(33);
  GanWorker b = tiny_worker(33);
  train_update(a, batch, 0.1);
  train_update(b, batch, 0.1);
  CHECK(serialize_params(a.generator) == serialize_params(b.generator));
  CHECK(serialize_params(a.discriminator) == serialize_params(b.discriminator));
}

TEST_CASE("eval_d_cost fixtures") {
  GanWorker w = tiny_worker(40);
  w.discriminator = single_layer(2, 1, 0.0, 0.0);
  Matrix data(16, 2, 0.5);

  SUBCASE("logit-zero net costs 2 ln 2") {
    SplittableRng rng(40, 7);
    CHECK(eval_d_cost(w, data, rng) == doctest::Approx(2 * kLn2).epsilon(1e-12));
  }

  SUBCASE("same stream, same cost") {
    SplittableRng r1(41, 7), r2(41, 7);
    GanWorker w2 = tiny_worker(40);
    CHECK(eval_d_cost(w2, data, r1) == eval_d_cost(w2, data, r2));
  }
}

TEST_CASE("eval cost agrees with the training loss on a batchnorm-free net") {
  // bn-free nets make train-mode and eval-mode forwards identical
  GanWorker w = tiny_worker(42);
  SplittableRng init(43, 0);
  w.generator = init_model({{4, 8, false, Activation::kRelu},
                            {8, 2, false, Activation::kSigmoid}},
                           init);
  w.discriminator = init_model({{2, 8, false, Activation::kRelu},
                                {8, 1, false, Activation::kIdentity}},
                               init);
  w.g_opt = AdamState::init(w.generator);
  w.d_opt = AdamState::init(w.discriminator);

  SplittableRng data_rng(44, 0);
  Matrix data(12, 2);
  data_rng.fill_uniform(data.flat(), 0.0, 1.0);

  SplittableRng eval_rng(45, 0);
  const double cost = eval_d_cost(w, data, eval_rng);

  // replay the same fake batch through the training-loss path
  SplittableRng replay(45, 0);
  const Matrix z = sample_prior(w.prior, data.rows(), replay);
  const Matrix fake = mlp_eval(w.generator, z);
  GanWorker tmp = w;
  const DLossResult d = d_loss_and_grads(tmp, data, fake);
  CHECK(cost == doctest::Approx(d.loss).epsilon(1e-12));
}

TEST_CASE("500 updates on mixture data keep discriminator accuracy in band") {
  SplittableRng data_rng(50, 0);
  auto [data, transform] = normalize_to_unit(make_mog(2500, 0.05, data_rng));
  SplittableRng split_rng(50, 1);
  const TrainValSplit split = split_train_val(data, 0.2, split_rng);

  GanHyper h;  // defaults
  Prior prior{PriorKind::kUniform, h.prior_dim};
  GanWorker w = make_worker(0, h, prior, NoiseSchedule{0.1, 0.5},
                            SplittableRng(50, 100));
  BatchStream batches(split.train, h.batch, SplittableRng(50, 101));

  const std::uint64_t total = 500;
  std::size_t in_band = 0;
  for (std::uint64_t t = 0; t < total; ++t) {
    const double sigma = noise_sigma(w.noise, t, total);
    const StepMetrics m = train_update(w, batches.next(), sigma);
    if (m.d_real_acc > 0.02 && m.d_real_acc < 0.98 && m.d_fake_acc > 0.02 &&
        m.d_fake_acc < 0.98)
      ++in_band;
  }
  CHECK(in_band >= 400);  // 80% of 500
}
