#include "gapforge/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gapforge/errors.hpp"

namespace gapforge {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

std::size_t ModelParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    n += l.w.size() + l.b.size() + l.bn_gamma.size() + l.bn_beta.size();
  return n;
}

void ModelParams::validate() const {
  require(!layers.empty(), "model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    require(l.spec.in_dim >= 1 && l.spec.out_dim >= 1, "layer dims must be >= 1");
    if (i > 0)
      require(l.spec.in_dim == layers[i - 1].spec.out_dim,
              "layer dimension chain broken at layer " + std::to_string(i));
    require(l.w.rows() == l.spec.out_dim && l.w.cols() == l.spec.in_dim,
            "weight shape mismatch");
    // batchnorm layers carry no linear bias; bn_beta plays that role
    require(l.b.size() == (l.spec.batchnorm ? 0 : l.spec.out_dim),
            "bias shape mismatch");
    const std::size_t bn = l.spec.batchnorm ? l.spec.out_dim : 0;
    require(l.bn_gamma.size() == bn && l.bn_beta.size() == bn &&
                l.bn_running_mean.size() == bn && l.bn_running_var.size() == bn,
            "batchnorm tensor shape mismatch");
    for (double v : l.bn_running_var)
      require(v > 0.0, "bn_running_var entries must be positive");
  }
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.spec.in_dim != y.spec.in_dim || x.spec.out_dim != y.spec.out_dim ||
        x.spec.batchnorm != y.spec.batchnorm ||
        x.spec.activation != y.spec.activation)
      return false;
    if (x.w != y.w || x.b != y.b || x.bn_gamma != y.bn_gamma ||
        x.bn_beta != y.bn_beta || x.bn_running_mean != y.bn_running_mean ||
        x.bn_running_var != y.bn_running_var)
      return false;
  }
  return true;
}

GradStore GradStore::zeros_like(const ModelParams& p) {
  GradStore g;
  g.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    LayerGrads lg;
    lg.w = Matrix(l.w.rows(), l.w.cols());
    lg.b.assign(l.b.size(), 0.0);
    lg.bn_gamma.assign(l.bn_gamma.size(), 0.0);
    lg.bn_beta.assign(l.bn_beta.size(), 0.0);
    g.layers.push_back(std::move(lg));
  }
  return g;
}

double GradStore::l2_norm() const {
  double acc = 0.0;
  visit_grads(const_cast<GradStore&>(*this), [&](double& v) { acc += v * v; });
  return std::sqrt(acc);
}

bool GradStore::all_finite() const {
  bool ok = true;
  visit_grads(const_cast<GradStore&>(*this),
              [&](double& v) { ok = ok && std::isfinite(v); });
  return ok;
}

void GradStore::scale(double s) {
  visit_grads(*this, [&](double& v) { v *= s; });
}

void GradStore::add(const GradStore& other) {
  for (std::size_t li = 0; li < layers.size(); ++li) {
    auto& a = layers[li];
    const auto& b = other.layers[li];
    for (std::size_t i = 0; i < a.w.size(); ++i)
      a.w.data()[i] += b.w.data()[i];
    for (std::size_t i = 0; i < a.b.size(); ++i) a.b[i] += b.b[i];
    for (std::size_t i = 0; i < a.bn_gamma.size(); ++i)
      a.bn_gamma[i] += b.bn_gamma[i];
    for (std::size_t i = 0; i < a.bn_beta.size(); ++i)
      a.bn_beta[i] += b.bn_beta[i];
  }
}

namespace {

// Shared forward path. `stats_sink`, when non-null, receives the running
// statistics update (train mode only).
Matrix forward_impl(const ModelParams& params, const Matrix& x, RunMode mode,
                    ForwardCache* cache, ModelParams* stats_sink) {
  require(!params.layers.empty(), "model has no layers");
  require(x.cols() == params.in_dim(), "input width does not match first layer");
  if (cache) {
    cache->mode = mode;
    cache->layers.assign(params.layers.size(), LayerCache{});
  }

  Matrix cur = x;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& l = params.layers[li];
    const std::size_t n = cur.rows();
    const std::size_t d = l.spec.out_dim;
    if (l.spec.batchnorm && mode == RunMode::kTrain)
      require(n >= 2, "batchnorm in train mode needs batch >= 2");

    Matrix z = matmul_nt(cur, l.w);
    if (!l.b.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        double* zr = z.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) zr[j] += l.b[j];
      }
    }

    Matrix xhat;
    std::vector<double> inv_std;
    if (l.spec.batchnorm) {
      inv_std.resize(d);
      std::vector<double> mu(d), var(d);
      if (mode == RunMode::kTrain) {
        mu = col_mean(z);
        var.assign(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double* zr = z.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) {
            const double c = zr[j] - mu[j];
            var[j] += c * c;
          }
        }
        for (double& v : var) v /= static_cast<double>(n);
        if (stats_sink) {
          auto& sl = stats_sink->layers[li];
          for (std::size_t j = 0; j < d; ++j) {
            sl.bn_running_mean[j] =
                kBnMomentum * sl.bn_running_mean[j] + (1.0 - kBnMomentum) * mu[j];
            sl.bn_running_var[j] =
                kBnMomentum * sl.bn_running_var[j] + (1.0 - kBnMomentum) * var[j];
          }
        }
      } else {
        mu = l.bn_running_mean;
        var = l.bn_running_var;
      }
      for (std::size_t j = 0; j < d; ++j)
        inv_std[j] = 1.0 / std::sqrt(var[j] + kBnEps);

      xhat = Matrix(n, d);
      for (std::size_t i = 0; i < n; ++i) {
        const double* zr = z.data() + i * d;
        double* xr = xhat.data() + i * d;
        for (std::size_t j = 0; j < d; ++j)
          xr[j] = (zr[j] - mu[j]) * inv_std[j];
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double* xr = xhat.data() + i * d;
        double* zr = z.data() + i * d;
        for (std::size_t j = 0; j < d; ++j)
          zr[j] = l.bn_gamma[j] * xr[j] + l.bn_beta[j];
      }
    }

    Matrix out = z;
    switch (l.spec.activation) {
      case Activation::kRelu:
        for (double& v : out.flat())
          if (v < 0.0) v = 0.0;
        break;
      case Activation::kSigmoid:
        for (double& v : out.flat()) v = sigmoid(v);
        break;
      case Activation::kIdentity:
        break;
    }

    if (cache) {
      auto& lc = cache->layers[li];
      lc.input = std::move(cur);
      lc.xhat = std::move(xhat);
      lc.inv_std = std::move(inv_std);
      lc.act_in = z;
      lc.act_out = out;
    }
    cur = std::move(out);
  }
  return cur;
}

}  // namespace

Matrix mlp_forward(ModelParams& params, const Matrix& x, RunMode mode,
                   ForwardCache* cache) {
  return forward_impl(params, x, mode, cache,
                      mode == RunMode::kTrain ? &params : nullptr);
}

Matrix mlp_eval(const ModelParams& params, const Matrix& x) {
  return forward_impl(params, x, RunMode::kEval, nullptr, nullptr);
}

BackwardResult mlp_backward(const ModelParams& params,
                            const ForwardCache& cache, const Matrix& grad_out) {
  require(cache.layers.size() == params.layers.size(),
          "cache does not match model");
  const auto& last = cache.layers.back();
  require(grad_out.rows() == last.act_out.rows() &&
              grad_out.cols() == last.act_out.cols(),
          "grad_out shape does not match forward output");

  BackwardResult res;
  res.grads = GradStore::zeros_like(params);

  Matrix dy = grad_out;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& l = params.layers[li];
    const auto& lc = cache.layers[li];
    const std::size_t n = dy.rows();
    const std::size_t d = l.spec.out_dim;
    auto& lg = res.grads.layers[li];

    // activation
    Matrix dp = std::move(dy);
    switch (l.spec.activation) {
      case Activation::kRelu:
        for (std::size_t i = 0; i < dp.size(); ++i)
          if (lc.act_in.data()[i] <= 0.0) dp.data()[i] = 0.0;
        break;
      case Activation::kSigmoid:
        for (std::size_t i = 0; i < dp.size(); ++i) {
          const double y = lc.act_out.data()[i];
          dp.data()[i] *= y * (1.0 - y);
        }
        break;
      case Activation::kIdentity:
        break;
    }

    // batchnorm
    Matrix dz;
    if (l.spec.batchnorm) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* dpr = dp.data() + i * d;
        const double* xr = lc.xhat.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
          lg.bn_gamma[j] += dpr[j] * xr[j];
          lg.bn_beta[j] += dpr[j];
        }
      }
      dz = Matrix(n, d);
      if (cache.mode == RunMode::kTrain) {
        // dz = inv_std/m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        // with dxhat = dp * gamma; batch statistics are functions of z.
        std::vector<double> sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double* dpr = dp.data() + i * d;
          const double* xr = lc.xhat.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dpr[j] * l.bn_gamma[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xr[j];
          }
        }
        const double m = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double* dpr = dp.data() + i * d;
          const double* xr = lc.xhat.data() + i * d;
          double* dzr = dz.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dpr[j] * l.bn_gamma[j];
            dzr[j] = lc.inv_std[j] / m *
                     (m * dxh - sum_dxhat[j] - xr[j] * sum_dxhat_xhat[j]);
          }
        }
      } else {
        // running statistics are constants in eval mode
        for (std::size_t i = 0; i < n; ++i) {
          const double* dpr = dp.data() + i * d;
          double* dzr = dz.data() + i * d;
          for (std::size_t j = 0; j < d; ++j)
            dzr[j] = dpr[j] * l.bn_gamma[j] * lc.inv_std[j];
        }
      }
    } else {
      dz = std::move(dp);
    }

    // linear
    lg.w = matmul_tn(dz, lc.input);
    if (!l.b.empty()) lg.b = col_sum(dz);
    dy = matmul_nn(dz, l.w);
  }
  res.grad_in = std::move(dy);
  return res;
}

double clip_grad_norm(GradStore& grads, double max_norm) {
  require(max_norm > 0.0, "max_norm must be positive");
  if (!grads.all_finite())
    throw NumericError("clip_grad_norm: non-finite gradient");
  const double norm = grads.l2_norm();
  // the 1e-12 slack keeps clipping idempotent: a rescaled store whose
  // recomputed norm lands one ulp above max_norm is left alone
  if (norm > max_norm * (1.0 + 1e-12)) grads.scale(max_norm / norm);
  return norm;
}

AdamState AdamState::init(const ModelParams& p, double lr, double beta1,
                          double beta2, double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.m = GradStore::zeros_like(p);
  s.v = GradStore::zeros_like(p);
  return s;
}

void adam_step(ModelParams& params, const GradStore& grads, AdamState& state) {
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
  const double t = static_cast<double>(++state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& pl = params.layers[li];
    const auto& gl = grads.layers[li];
    auto& ml = state.m.layers[li];
    auto& vl = state.v.layers[li];
    auto update = [&](double& p, const double g, double& m, double& v) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      p -= state.lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
    };
    for (std::size_t i = 0; i < pl.w.size(); ++i)
      update(pl.w.data()[i], gl.w.data()[i], ml.w.data()[i], vl.w.data()[i]);
    for (std::size_t i = 0; i < pl.b.size(); ++i)
      update(pl.b[i], gl.b[i], ml.b[i], vl.b[i]);
    for (std::size_t i = 0; i < pl.bn_gamma.size(); ++i)
      update(pl.bn_gamma[i], gl.bn_gamma[i], ml.bn_gamma[i], vl.bn_gamma[i]);
    for (std::size_t i = 0; i < pl.bn_beta.size(); ++i)
      update(pl.bn_beta[i], gl.bn_beta[i], ml.bn_beta[i], vl.bn_beta[i]);
  }
}

double grad_check(ModelParams params,
                  const std::function<double(const ModelParams&)>& loss,
                  const GradStore& analytic, double h) {
  require(h > 0.0, "grad_check: h must be positive");
  double max_rel = 0.0;
  visit_trainable(params, const_cast<GradStore&>(analytic),
                  [&](double& pv, double& av) {
                    const double old = pv;
                    pv = old + h;
                    const double lp = loss(params);
                    pv = old - h;
                    const double lm = loss(params);
                    pv = old;
                    if (!std::isfinite(lp) || !std::isfinite(lm))
                      throw NumericError("grad_check: non-finite loss");
                    const double fd = (lp - lm) / (2.0 * h);
                    const double rel =
                        std::abs(av - fd) / std::max(std::abs(av), 1e-8);
                    if (rel > max_rel) max_rel = rel;
                  });
  return max_rel;
}

ModelParams init_model(const std::vector<LayerSpec>& specs,
                       SplittableRng& rng) {
  ModelParams p;
  p.layers.reserve(specs.size());
  for (const auto& spec : specs) {
    LayerParams l;
    l.spec = spec;
    l.w = Matrix(spec.out_dim, spec.in_dim);
    const double stddev =
        spec.activation == Activation::kRelu
            ? std::sqrt(2.0 / static_cast<double>(spec.in_dim))
            : std::sqrt(1.0 / static_cast<double>(spec.in_dim));
    rng.fill_normal(l.w.flat(), 0.0, stddev);
    if (!spec.batchnorm) l.b.assign(spec.out_dim, 0.0);
    if (spec.batchnorm) {
      l.bn_gamma.assign(spec.out_dim, 1.0);
      l.bn_beta.assign(spec.out_dim, 0.0);
      l.bn_running_mean.assign(spec.out_dim, 0.0);
      l.bn_running_var.assign(spec.out_dim, 1.0);
    }
    p.layers.push_back(std::move(l));
  }
  p.validate();
  return p;
}

}  // namespace gapforge
