#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gapforge/matrix.hpp"
#include "gapforge/rng.hpp"

namespace gapforge {

enum class Activation : std::uint32_t { kRelu = 0, kSigmoid = 1, kIdentity = 2 };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  bool batchnorm = false;
  Activation activation = Activation::kIdentity;
};

// One dense layer: W (out_dim x in_dim), bias, and when batchnorm is
// enabled the affine parameters plus running statistics used in eval mode.
struct LayerParams {
  LayerSpec spec;
  Matrix w;
  std::vector<double> b;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  std::vector<double> bn_running_mean;
  std::vector<double> bn_running_var;
};

struct ModelParams {
  std::vector<LayerParams> layers;

  std::size_t in_dim() const { return layers.front().spec.in_dim; }
  std::size_t out_dim() const { return layers.back().spec.out_dim; }
  std::size_t trainable_count() const;

  // Dim chain, tensor shapes, running_var > 0. Throws std::invalid_argument.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&);
};

// Gradients for every trainable tensor; running stats excluded.
struct GradStore {
  struct LayerGrads {
    Matrix w;
    std::vector<double> b;
    std::vector<double> bn_gamma;
    std::vector<double> bn_beta;
  };
  std::vector<LayerGrads> layers;

  static GradStore zeros_like(const ModelParams& p);
  double l2_norm() const;
  bool all_finite() const;
  void scale(double s);
  void add(const GradStore& other);
};

enum class RunMode { kTrain, kEval };

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

struct LayerCache {
  Matrix input;                 // layer input (n x in)
  Matrix xhat;                  // normalized pre-activation, bn layers only
  std::vector<double> inv_std;  // 1/sqrt(var + eps) used by the forward pass
  Matrix act_in;                // pre-activation (after bn affine)
  Matrix act_out;               // layer output
};

struct ForwardCache {
  RunMode mode = RunMode::kTrain;
  std::vector<LayerCache> layers;
};

// Forward pass. Train mode uses batch statistics (batch >= 2 required when
// any layer has batchnorm) and updates running stats; eval mode uses the
// running statistics and leaves params untouched. `cache`, when given, is
// filled for a later mlp_backward.
Matrix mlp_forward(ModelParams& params, const Matrix& x, RunMode mode,
                   ForwardCache* cache = nullptr);

// Eval-mode forward; a deterministic pure function of (params, x).
Matrix mlp_eval(const ModelParams& params, const Matrix& x);

struct BackwardResult {
  GradStore grads;
  Matrix grad_in;
};

BackwardResult mlp_backward(const ModelParams& params,
                            const ForwardCache& cache, const Matrix& grad_out);

// Rescales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm. Throws NumericError on non-finite gradients.
double clip_grad_norm(GradStore& grads, double max_norm);

struct AdamState {
  std::uint64_t step = 0;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  GradStore m;
  GradStore v;

  static AdamState init(const ModelParams& p, double lr = 2e-4,
                        double beta1 = 0.5, double beta2 = 0.999,
                        double eps = 1e-8);
};

// Standard bias-corrected Adam update; increments state.step.
void adam_step(ModelParams& params, const GradStore& grads, AdamState& state);

// Central finite differences against `analytic` for every trainable
// component. Returns max over components of
//   |analytic - (loss(p+h) - loss(p-h)) / 2h| / max(|analytic|, 1e-8).
double grad_check(ModelParams params,
                  const std::function<double(const ModelParams&)>& loss,
                  const GradStore& analytic, double h);

// He-style random init: W ~ N(0, sqrt(2/in)) into ReLU layers and
// N(0, sqrt(1/in)) elsewhere, b = 0, gamma = 1, beta = 0, running stats
// (0, 1).
ModelParams init_model(const std::vector<LayerSpec>& specs,
                       SplittableRng& rng);

// Visits every trainable scalar of `p` zipped with the congruent scalar of
// `g`, in serialization order.
template <typename P, typename G, typename Fn>
void visit_trainable(P& p, G& g, Fn&& fn) {
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    auto& pl = p.layers[li];
    auto& gl = g.layers[li];
    for (std::size_t i = 0; i < pl.w.size(); ++i)
      fn(pl.w.data()[i], gl.w.data()[i]);
    for (std::size_t i = 0; i < pl.b.size(); ++i) fn(pl.b[i], gl.b[i]);
    for (std::size_t i = 0; i < pl.bn_gamma.size(); ++i)
      fn(pl.bn_gamma[i], gl.bn_gamma[i]);
    for (std::size_t i = 0; i < pl.bn_beta.size(); ++i)
      fn(pl.bn_beta[i], gl.bn_beta[i]);
  }
}

template <typename G, typename Fn>
void visit_grads(G& g, Fn&& fn) {
  for (auto& gl : g.layers) {
    for (std::size_t i = 0; i < gl.w.size(); ++i) fn(gl.w.data()[i]);
    for (double& v : gl.b) fn(v);
    for (double& v : gl.bn_gamma) fn(v);
    for (double& v : gl.bn_beta) fn(v);
  }
}

// log(sigmoid(a)) computed without overflow for any finite logit.
inline double log_sigmoid(double a) {
  // log sigma(a) = -softplus(-a) = min(a, 0) - log1p(exp(-|a|))
  return (a < 0.0 ? a : 0.0) - std::log1p(std::exp(-std::abs(a)));
}

inline double sigmoid(double a) {
  if (a >= 0.0) {
    return 1.0 / (1.0 + std::exp(-a));
  }
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace gapforge
