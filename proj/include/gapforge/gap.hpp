#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "gapforge/dataset.hpp"
#include "gapforge/gan.hpp"
#include "gapforge/metrics.hpp"

namespace gapforge {

struct SwapInterval {
  enum class Kind { kDisabled, kEveryKUpdates, kEpochFraction };
  Kind kind = Kind::kEpochFraction;
  std::uint64_t k = 1;     // kEveryKUpdates
  double fraction = 1.0;   // kEpochFraction, period in epochs

  static SwapInterval disabled() { return {Kind::kDisabled, 0, 0.0}; }
  static SwapInterval every_updates(std::uint64_t k) {
    return {Kind::kEveryKUpdates, k, 0.0};
  }
  static SwapInterval epoch_fraction(double f) {
    return {Kind::kEpochFraction, 0, f};
  }
};

enum class PriorPolicy { kAlternate, kAllUniform, kAllGaussian };

struct WorkerOverride {
  std::optional<PriorKind> prior;
  std::optional<double> lr;
  std::optional<double> sigma0;
  std::optional<double> decay_until;
};

struct GapConfig {
  int n_workers = 4;
  std::uint64_t total_updates = 1;
  SwapInterval swap;
  std::uint64_t seed = 0;
  std::uint64_t eval_every = 0;  // 0 = auto, about 100 ticks per run
  double val_fraction = 0.2;
  GanHyper gan;
  NoiseSchedule noise;
  PriorPolicy prior_policy = PriorPolicy::kAlternate;
  std::map<int, WorkerOverride> overrides;

  // Throws ConfigError. Swapping requires an even worker count (the
  // schedule draws N/2 pairs); N = 1 is allowed only with swapping off.
  void validate() const;
};

struct SwapEvent {
  std::uint64_t at_update = 0;
  std::vector<std::pair<int, int>> pairs;
};

struct GapGroup {
  std::vector<GanWorker> workers;
  std::vector<SwapEvent> swap_log;
  SplittableRng swap_rng;  // dedicated stream, independent of worker streams
};

// n/2 disjoint pairs covering {0..n-1}, uniform over all (n-1)!! perfect
// matchings. Throws on odd n.
std::vector<std::pair<int, int>> random_perfect_matching(int n,
                                                         SplittableRng& rng);

// True at the update indices where Algorithm-1 style swapping fires
// (t % k == 0, skipping the no-op t = 0 event).
constexpr bool swap_due(std::uint64_t t, std::uint64_t k) {
  return t > 0 && t % k == 0;
}

// Resolved swap period in updates; epoch fractions round to at least 1.
std::uint64_t resolve_swap_updates(const SwapInterval& s,
                                   std::uint64_t updates_per_epoch);

// Exchanges discriminator parameters, optimizer state, and lineage id
// between the paired workers via serialized payload messages; generators
// are untouched; both seen sets gain the incoming lineage; the event is
// appended to the swap log.
void apply_swap(GapGroup& group, const std::vector<std::pair<int, int>>& pairs,
                std::uint64_t at_update);

struct EvalRecord {
  int worker = 0;
  std::uint64_t update = 0;
  double train_cost = 0.0;
  double val_cost = 0.0;
};

enum class Scheduler { kSequential, kParallel };

struct RunResult {
  GapGroup group;
  std::vector<StepMetrics> metrics;      // ordered by (update, worker)
  std::vector<EvalRecord> eval_records;  // ordered by (update, worker)
  std::uint64_t resolved_swap_k = 0;     // 0 when swapping is disabled
  std::uint64_t updates_per_epoch = 0;
};

// Algorithm-1 training: every worker receives exactly total_updates
// updates; workers run independently between barriers; a swap is a full
// barrier. The sequential scheduler is the reference semantics; the
// parallel scheduler (OpenMP threads over workers) is observationally
// identical, bit for bit.
RunResult run_gap(const GapConfig& cfg, const Dataset& data, Scheduler sched);

// GAM-II selection: highest average error over eligible judges, ties
// broken by worst-case error, then by lowest worker id.
int select_best(const GapGroup& group, const std::vector<Judge>& judge_pool,
                std::size_t n_samples, SplittableRng& rng);

}  // namespace gapforge
