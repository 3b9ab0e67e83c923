#include "gapforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gapforge {

double disc_error(const ModelParams& discriminator, const Matrix& samples) {
  if (samples.rows() == 0)
    throw std::invalid_argument("disc_error: empty sample set");
  const Matrix logits = mlp_eval(discriminator, samples);
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i)
    if (logits(i, 0) >= 0.0) ++fooled;
  return static_cast<double>(fooled) / static_cast<double>(logits.rows());
}

ErrorTable build_error_table(const std::vector<GenEntry>& generators,
                             const std::vector<Judge>& judges,
                             std::size_t n_samples, SplittableRng& rng) {
  if (generators.empty() || judges.empty())
    throw std::invalid_argument("build_error_table: empty pool");
  if (n_samples == 0)
    throw std::invalid_argument("build_error_table: n_samples must be >= 1");

  ErrorTable t;
  t.generator_ids.reserve(generators.size());
  for (const auto& g : generators) t.generator_ids.push_back(g.worker_id);
  t.judge_lineages.reserve(judges.size());
  for (const auto& j : judges) t.judge_lineages.push_back(j.lineage);
  t.errors = Matrix(generators.size(), judges.size());
  t.eligible.assign(generators.size() * judges.size(), 0);

  // one fresh sample set per generator, deterministic per row
  std::vector<Matrix> sample_sets(generators.size());
  for (std::size_t gi = 0; gi < generators.size(); ++gi) {
    SplittableRng row_rng = rng.split(static_cast<std::uint64_t>(gi));
    const Matrix z = sample_prior(generators[gi].prior, n_samples, row_rng);
    sample_sets[gi] = mlp_eval(generators[gi].generator, z);
  }

  const std::int64_t cells =
      static_cast<std::int64_t>(generators.size() * judges.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < cells; ++c) {
    const std::size_t gi = static_cast<std::size_t>(c) / judges.size();
    const std::size_t di = static_cast<std::size_t>(c) % judges.size();
    t.errors(gi, di) = disc_error(judges[di].discriminator, sample_sets[gi]);
    t.eligible[c] =
        generators[gi].seen.count(judges[di].lineage) == 0 ? 1 : 0;
  }
  return t;
}

std::vector<Gam2Score> gam2_scores(const ErrorTable& table) {
  std::vector<Gam2Score> scores(table.generator_ids.size());
  for (std::size_t g = 0; g < table.generator_ids.size(); ++g) {
    double sum = 0.0;
    double worst = 1.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < table.judge_lineages.size(); ++d) {
      if (!table.is_eligible(g, d)) continue;
      const double e = table.errors(g, d);
      sum += e;
      worst = std::min(worst, e);
      ++n;
    }
    if (n == 0)
      throw std::invalid_argument(
          "gam2_scores: generator " + std::to_string(table.generator_ids[g]) +
          " has no eligible judge");
    scores[g] = {sum / static_cast<double>(n), worst};
  }
  return scores;
}

std::size_t rank_best(const std::vector<Gam2Score>& scores) {
  if (scores.empty()) throw std::invalid_argument("rank_best: empty scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].avg > scores[best].avg ||
        (scores[i].avg == scores[best].avg &&
         scores[i].worst > scores[best].worst))
      best = i;
  }
  return best;
}

GamVerdict gap_verdict(std::span<const Gam2Score> single,
                       std::span<const Gam2Score> gap, GamCriterion criterion) {
  if (single.empty() || gap.empty())
    throw std::invalid_argument("gap_verdict: empty score list");
  auto value = [&](const Gam2Score& s) {
    return criterion == GamCriterion::kAvg ? s.avg : s.worst;
  };
  double single_max = value(single[0]);
  for (const auto& s : single) single_max = std::max(single_max, value(s));
  double gap_min = value(gap[0]);
  double gap_max = value(gap[0]);
  for (const auto& s : gap) {
    gap_min = std::min(gap_min, value(s));
    gap_max = std::max(gap_max, value(s));
  }
  if (gap_min > single_max) return GamVerdict::kStronglyHelps;
  if (gap_max > single_max) return GamVerdict::kHelps;
  return GamVerdict::kNeither;
}

namespace {

std::size_t nearest_mode(const std::vector<Mode>& modes, double x, double y) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const double dx = x - modes[m].center[0];
    const double dy = y - modes[m].center[1];
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = m;
    }
  }
  return best;
}

}  // namespace

CoverageReport mode_coverage(const Matrix& samples,
                             const std::vector<Mode>& modes,
                             double radius_multiplier, std::size_t min_count) {
  if (samples.rows() == 0)
    throw std::invalid_argument("mode_coverage: empty sample set");
  if (modes.empty()) throw std::invalid_argument("mode_coverage: no modes");
  if (radius_multiplier <= 0.0)
    throw std::invalid_argument("mode_coverage: radius_multiplier must be > 0");

  CoverageReport r;
  r.total_modes = modes.size();
  r.per_mode_counts.assign(modes.size(), 0);
  r.n_samples = samples.rows();
  std::size_t hq = 0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const double x = samples(i, 0);
    const double y = samples(i, 1);
    const std::size_t m = nearest_mode(modes, x, y);
    const double dx = x - modes[m].center[0];
    const double dy = y - modes[m].center[1];
    const double radius = radius_multiplier * modes[m].scale;
    if (dx * dx + dy * dy <= radius * radius) {
      ++r.per_mode_counts[m];
      ++hq;
    }
  }
  for (std::size_t m = 0; m < modes.size(); ++m)
    if (r.per_mode_counts[m] >= min_count) ++r.covered_modes;
  r.high_quality_fraction =
      static_cast<double>(hq) / static_cast<double>(samples.rows());
  return r;
}

double mode_kl_score(const Matrix& samples, const std::vector<Mode>& modes) {
  if (modes.empty()) throw std::invalid_argument("mode_kl_score: no modes");
  if (samples.rows() == 0)
    throw std::invalid_argument("mode_kl_score: empty sample set");
  std::vector<std::size_t> counts(modes.size(), 0);
  for (std::size_t i = 0; i < samples.rows(); ++i)
    ++counts[nearest_mode(modes, samples(i, 0), samples(i, 1))];
  // With one-hot p(y|x), mean KL to the marginal is the marginal entropy;
  // empty classes contribute 0 * log 0 = 0.
  const double n = static_cast<double>(samples.rows());
  double entropy = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double curve_spread(std::span<const double> train_costs,
                    std::span<const double> val_costs, double tail_fraction) {
  if (train_costs.size() != val_costs.size())
    throw std::invalid_argument("curve_spread: series length mismatch");
  if (train_costs.empty())
    throw std::invalid_argument("curve_spread: empty series");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw std::invalid_argument("curve_spread: tail_fraction must be in (0,1]");
  const std::size_t n = train_costs.size();
  std::size_t count = static_cast<std::size_t>(
      tail_fraction * static_cast<double>(n));
  count = std::clamp<std::size_t>(count, 1, n);
  double acc = 0.0;
  for (std::size_t i = n - count; i < n; ++i)
    acc += std::abs(train_costs[i] - val_costs[i]);
  return acc / static_cast<double>(count);
}

}  // namespace gapforge
