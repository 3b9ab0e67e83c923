#include "gapforge/gap.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gapforge/checkpoint.hpp"
#include "gapforge/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gapforge {

void GapConfig::validate() const {
  if (n_workers < 1) throw ConfigError("n_workers must be >= 1");
  const bool swapping = swap.kind != SwapInterval::Kind::kDisabled;
  if (swapping && (n_workers < 2 || n_workers % 2 != 0))
    throw ConfigError("swapping requires an even worker count >= 2");
  if (total_updates < 1) throw ConfigError("total_updates must be >= 1");
  if (swap.kind == SwapInterval::Kind::kEveryKUpdates && swap.k < 1)
    throw ConfigError("swap interval K must be >= 1");
  if (swap.kind == SwapInterval::Kind::kEpochFraction && !(swap.fraction > 0.0))
    throw ConfigError("swap epoch fraction must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must be in (0,1)");
  if (gan.batch < 2) throw ConfigError("batch must be >= 2 (batchnorm)");
  if (gan.hidden < 1 || gan.prior_dim < 1)
    throw ConfigError("hidden and prior_dim must be >= 1");
  if (!(gan.lr > 0.0) || !(gan.clip_norm > 0.0))
    throw ConfigError("lr and clip_norm must be positive");
  for (const auto& [id, ov] : overrides) {
    if (id < 0 || id >= n_workers)
      throw ConfigError("override for unknown worker " + std::to_string(id));
    if (ov.lr && !(*ov.lr > 0.0)) throw ConfigError("override lr must be > 0");
    if (ov.sigma0 && *ov.sigma0 < 0.0)
      throw ConfigError("override sigma0 must be >= 0");
    if (ov.decay_until && !(*ov.decay_until > 0.0 && *ov.decay_until <= 1.0))
      throw ConfigError("override decay_until must be in (0,1]");
  }
}

std::vector<std::pair<int, int>> random_perfect_matching(int n,
                                                         SplittableRng& rng) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("perfect matching needs even n >= 2");
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(n / 2);
  while (!pool.empty()) {
    const int a = pool.front();
    pool.erase(pool.begin());
    const std::size_t k = rng.below(pool.size());
    const int b = pool[k];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    pairs.emplace_back(a, b);
  }
  return pairs;
}

std::uint64_t resolve_swap_updates(const SwapInterval& s,
                                   std::uint64_t updates_per_epoch) {
  switch (s.kind) {
    case SwapInterval::Kind::kDisabled:
      return 0;
    case SwapInterval::Kind::kEveryKUpdates:
      return s.k;
    case SwapInterval::Kind::kEpochFraction: {
      const double k = s.fraction * static_cast<double>(updates_per_epoch);
      return std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(std::llround(k)));
    }
  }
  return 0;
}

void apply_swap(GapGroup& group, const std::vector<std::pair<int, int>>& pairs,
                std::uint64_t at_update) {
  auto index_of = [&](int id) -> std::size_t {
    for (std::size_t i = 0; i < group.workers.size(); ++i)
      if (group.workers[i].id == id) return i;
    throw std::invalid_argument("apply_swap: unknown worker id " +
                                std::to_string(id));
  };

  std::vector<std::uint8_t> hit(group.workers.size(), 0);
  for (const auto& [a, b] : pairs) {
    if (a == b) throw std::invalid_argument("apply_swap: self-pair");
    for (int id : {a, b}) {
      const std::size_t i = index_of(id);
      if (hit[i]) throw std::invalid_argument("apply_swap: not a matching");
      hit[i] = 1;
    }
  }
  if (std::count(hit.begin(), hit.end(), 1) !=
      static_cast<std::ptrdiff_t>(group.workers.size()))
    throw std::invalid_argument("apply_swap: pairs do not cover the group");

  for (const auto& [a, b] : pairs) {
    GanWorker& wa = group.workers[index_of(a)];
    GanWorker& wb = group.workers[index_of(b)];
    // message-based exchange: each side ships its serialized payload
    const auto msg_a = serialize_disc_payload(wa.discriminator, wa.d_opt);
    const auto msg_b = serialize_disc_payload(wb.discriminator, wb.d_opt);
    deserialize_disc_payload(msg_b, wa.discriminator, wa.d_opt);
    deserialize_disc_payload(msg_a, wb.discriminator, wb.d_opt);
    std::swap(wa.disc_lineage, wb.disc_lineage);
    wa.seen_discriminators.insert(wa.disc_lineage);
    wb.seen_discriminators.insert(wb.disc_lineage);
  }
  group.swap_log.push_back({at_update, pairs});
}

namespace {

struct WorkerContext {
  BatchStream batches;
  SplittableRng eval_rng;
  std::vector<StepMetrics> metrics;
  std::vector<EvalRecord> evals;
};

// Random subset of the training points used for the train-side cost
// curve, sized like the validation set so the two costs are comparable.
Matrix train_eval_subset(const Matrix& train, std::size_t n,
                         SplittableRng rng) {
  n = std::min(n, train.rows());
  std::vector<std::uint32_t> idx(train.rows());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  Matrix out(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, 0) = train(idx[i], 0);
    out(i, 1) = train(idx[i], 1);
  }
  return out;
}

}  // namespace

RunResult run_gap(const GapConfig& cfg, const Dataset& data, Scheduler sched) {
  cfg.validate();
  if (data.size() < 4) throw ConfigError("dataset too small");

  const SplittableRng root(cfg.seed, 0);
  SplittableRng split_rng = root.split(2);
  const TrainValSplit split =
      split_train_val(data, cfg.val_fraction, split_rng);
  if (cfg.gan.batch > split.train->rows())
    throw ConfigError("batch larger than training split");

  const std::uint64_t updates_per_epoch =
      split.train->rows() / cfg.gan.batch;
  const std::uint64_t swap_k = resolve_swap_updates(cfg.swap, updates_per_epoch);
  const bool swapping = swap_k > 0 && cfg.n_workers > 1;
  const std::uint64_t total = cfg.total_updates;
  const std::uint64_t eval_every =
      cfg.eval_every > 0 ? cfg.eval_every
                         : std::max<std::uint64_t>(1, total / 100);

  RunResult res;
  res.resolved_swap_k = swapping ? swap_k : 0;
  res.updates_per_epoch = updates_per_epoch;
  res.group.swap_rng = root.split(1);

  std::vector<WorkerContext> ctx;
  ctx.reserve(cfg.n_workers);
  for (int i = 0; i < cfg.n_workers; ++i) {
    const SplittableRng base = root.split(1000 + static_cast<std::uint64_t>(i));
    GanHyper h = cfg.gan;
    Prior prior;
    prior.kind = cfg.prior_policy == PriorPolicy::kAllUniform
                     ? PriorKind::kUniform
                 : cfg.prior_policy == PriorPolicy::kAllGaussian
                     ? PriorKind::kGaussian
                     : (i % 2 == 0 ? PriorKind::kUniform : PriorKind::kGaussian);
    NoiseSchedule noise = cfg.noise;
    if (auto it = cfg.overrides.find(i); it != cfg.overrides.end()) {
      const WorkerOverride& ov = it->second;
      if (ov.prior) prior.kind = *ov.prior;
      if (ov.lr) h.lr = *ov.lr;
      if (ov.sigma0) noise.sigma0 = *ov.sigma0;
      if (ov.decay_until) noise.decay_until_fraction = *ov.decay_until;
    }
    res.group.workers.push_back(make_worker(i, h, prior, noise, base));
    ctx.push_back(WorkerContext{
        BatchStream(split.train, cfg.gan.batch, base.split(4)),
        base.split(5),
        {},
        {}});
  }

  // swap-compatibility: every discriminator must share one parameter shape
  for (const auto& w : res.group.workers) {
    const auto& a = res.group.workers.front().discriminator.layers;
    const auto& b = w.discriminator.layers;
    if (a.size() != b.size())
      throw ConfigError("discriminator shapes differ across workers");
    for (std::size_t l = 0; l < a.size(); ++l)
      if (a[l].spec.in_dim != b[l].spec.in_dim ||
          a[l].spec.out_dim != b[l].spec.out_dim)
        throw ConfigError("discriminator shapes differ across workers");
  }

  const Matrix train_eval =
      train_eval_subset(*split.train, split.val.rows(), root.split(7));

  auto eval_due = [&](std::uint64_t t) {
    return (t + 1) % eval_every == 0 || t + 1 == total;
  };
  auto swap_barrier = [&](std::uint64_t t) {
    return swapping && swap_due(t, swap_k);
  };

  const int n_workers = cfg.n_workers;
  std::vector<std::exception_ptr> errors(n_workers);

  auto run_chunk = [&](std::uint64_t t_begin, std::uint64_t t_end_incl,
                       bool do_eval) {
    auto work = [&](int wi) {
      try {
        GanWorker& w = res.group.workers[wi];
        WorkerContext& c = ctx[wi];
        for (std::uint64_t s = t_begin; s <= t_end_incl; ++s) {
          const Matrix batch = c.batches.next();
          const double sigma = noise_sigma(w.noise, s, total);
          c.metrics.push_back(train_update(w, batch, sigma));
        }
        if (do_eval) {
          const double tc = eval_d_cost(w, train_eval, c.eval_rng);
          const double vc = eval_d_cost(w, split.val, c.eval_rng);
          c.evals.push_back({w.id, t_end_incl, tc, vc});
        }
      } catch (...) {
        errors[wi] = std::current_exception();
      }
    };
    if (sched == Scheduler::kParallel) {
#pragma omp parallel for schedule(static, 1)
      for (int wi = 0; wi < n_workers; ++wi) work(wi);
    } else {
      for (int wi = 0; wi < n_workers; ++wi) work(wi);
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  };

  std::uint64_t t = 0;
  while (t < total) {
    // advance to the next barrier: a swap or an eval tick
    std::uint64_t b = t;
    while (b + 1 < total && !swap_barrier(b) && !eval_due(b)) ++b;
    run_chunk(t, b, eval_due(b));
    if (swap_barrier(b)) {
      const auto pairs = random_perfect_matching(n_workers, res.group.swap_rng);
      apply_swap(res.group, pairs, b);
    }
    t = b + 1;
  }

  for (auto& c : ctx) {
    res.metrics.insert(res.metrics.end(), c.metrics.begin(), c.metrics.end());
    res.eval_records.insert(res.eval_records.end(), c.evals.begin(),
                            c.evals.end());
  }
  std::sort(res.metrics.begin(), res.metrics.end(),
            [](const StepMetrics& a, const StepMetrics& b) {
              return std::tie(a.update_index, a.worker) <
                     std::tie(b.update_index, b.worker);
            });
  std::sort(res.eval_records.begin(), res.eval_records.end(),
            [](const EvalRecord& a, const EvalRecord& b) {
              return std::tie(a.update, a.worker) < std::tie(b.update, b.worker);
            });
  return res;
}

int select_best(const GapGroup& group, const std::vector<Judge>& judge_pool,
                std::size_t n_samples, SplittableRng& rng) {
  if (judge_pool.empty())
    throw std::invalid_argument("select_best: empty judge pool");
  std::vector<GenEntry> gens;
  gens.reserve(group.workers.size());
  for (const auto& w : group.workers)
    gens.push_back({w.id, w.generator, w.prior, w.seen_discriminators});
  const ErrorTable table = build_error_table(gens, judge_pool, n_samples, rng);
  const auto scores = gam2_scores(table);
  return group.workers[rank_best(scores)].id;
}

}  // namespace gapforge
