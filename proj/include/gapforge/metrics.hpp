#pragma once

#include <set>
#include <span>
#include <vector>

#include "gapforge/dataset.hpp"
#include "gapforge/gan.hpp"
#include "gapforge/matrix.hpp"

namespace gapforge {

// Fraction of generator samples the discriminator classifies as real
// (logit >= 0). Samples are fake by construction, so this is the judge's
// error rate. Eval-mode forward, deterministic.
double disc_error(const ModelParams& discriminator, const Matrix& samples);

struct Judge {
  int lineage = 0;
  ModelParams discriminator;
};

struct GenEntry {
  int worker_id = 0;
  ModelParams generator;
  Prior prior;
  std::set<int> seen;  // judge lineages excluded from scoring
};

struct ErrorTable {
  std::vector<int> generator_ids;
  std::vector<int> judge_lineages;
  Matrix errors;                      // |G| x |D|
  std::vector<std::uint8_t> eligible; // row-major |G| x |D| mask

  bool is_eligible(std::size_t g, std::size_t d) const {
    return eligible[g * judge_lineages.size() + d] != 0;
  }
};

// Each generator contributes one fresh sample set (per-generator RNG
// stream split from `rng` by row index); every judge scores every set.
ErrorTable build_error_table(const std::vector<GenEntry>& generators,
                             const std::vector<Judge>& judges,
                             std::size_t n_samples, SplittableRng& rng);

struct Gam2Score {
  double avg = 0.0;    // mean error over eligible judges
  double worst = 0.0;  // min error over eligible judges (harshest judge)
};

// Higher is better for the generator in both aggregates. Throws if a
// generator has no eligible judge.
std::vector<Gam2Score> gam2_scores(const ErrorTable& table);

// Rank: avg desc, then worst desc, then lowest index.
std::size_t rank_best(const std::vector<Gam2Score>& scores);

enum class GamCriterion { kAvg, kWorst };
enum class GamVerdict { kStronglyHelps, kHelps, kNeither };

// strongly-helps: every GAP model beats the best single model;
// helps: at least one does. Strict inequalities.
GamVerdict gap_verdict(std::span<const Gam2Score> single,
                       std::span<const Gam2Score> gap, GamCriterion criterion);

struct CoverageReport {
  std::size_t covered_modes = 0;
  std::size_t total_modes = 0;
  std::vector<std::size_t> per_mode_counts;  // high-quality samples per mode
  double high_quality_fraction = 0.0;
  std::size_t n_samples = 0;
};

// Nearest-center assignment; a sample is high quality when within
// radius_multiplier * mode scale of its center, and a mode is covered by
// min_count high-quality samples.
CoverageReport mode_coverage(const Matrix& samples,
                             const std::vector<Mode>& modes,
                             double radius_multiplier, std::size_t min_count);

// exp(mean KL(one-hot nearest-center assignment || empirical marginal)),
// i.e. the exponentiated marginal entropy. In [1, #modes]; equals #modes
// iff the marginal is exactly uniform.
double mode_kl_score(const Matrix& samples, const std::vector<Mode>& modes);

// Mean |train - val| over the final tail_fraction of evaluation ticks.
double curve_spread(std::span<const double> train_costs,
                    std::span<const double> val_costs, double tail_fraction);

}  // namespace gapforge
