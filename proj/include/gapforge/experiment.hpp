#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "gapforge/dataset.hpp"
#include "gapforge/gap.hpp"

namespace gapforge {

struct DatasetSpec {
  std::string kind = "mog";  // mog | r15 | r15_synthetic
  std::string path;          // r15 file
  std::size_t n = 2500;      // generated point count
  double std_dev = 0.05;     // component std before normalization
  std::size_t subsample = 0; // 0 = use all points
  double val_fraction = 0.2;
};

struct EvalSpec {
  std::size_t gam_samples = 2000;
  std::size_t coverage_samples = 2000;
  double coverage_radius = 3.0;
  std::size_t coverage_min_count = 20;
  double spread_tail = 0.25;
};

// Flat sectioned key=value experiment description. Unknown sections or
// keys are rejected; the canonical serialization is stored next to every
// run for provenance.
struct ExperimentConfig {
  std::string run_name = "run";
  DatasetSpec dataset;
  GapConfig gap;
  EvalSpec eval;

  static ExperimentConfig from_ini(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_ini() const;

  // "section.key=value" CLI override.
  void apply_override(const std::string& assignment);

  void validate() const;
};

// "off", "<K>upd" or "<F>epoch".
SwapInterval parse_swap_spec(const std::string& spec);
std::string format_swap_spec(const SwapInterval& s);

// The prior a given worker ends up with under the config's policy and
// overrides; shared by training and post-hoc evaluation.
Prior worker_prior(const GapConfig& cfg, int worker);

// Resolved, normalized dataset for a config (generation streams derive
// from the config seed).
std::pair<Dataset, UnitTransform> resolve_dataset(const DatasetSpec& spec,
                                                  std::uint64_t seed);

// FNV-1a 64-bit checksum of a file, as "fnv1a:<hex>".
std::string file_checksum(const std::filesystem::path& path);

inline constexpr const char* kCodeVersion = "gapforge 1.0.0";

// Output layout inside a run directory.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config_snapshot() const { return dir / "config.snapshot"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path metrics() const { return dir / "metrics.jsonl"; }
  std::filesystem::path swaps() const { return dir / "swaps.jsonl"; }
  std::filesystem::path eval() const { return dir / "eval.jsonl"; }
  std::filesystem::path reports() const { return dir / "reports"; }
  std::filesystem::path checkpoint(int worker, char role) const {
    return dir / ("worker" + std::to_string(worker) + "-" + role + ".ckpt");
  }
};

// Trains per the config, writing checkpoints, metrics/eval/swap logs and
// the manifest into <out_root>/<run_name>. Returns the run directory.
std::filesystem::path cmd_train(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_root,
                                Scheduler sched);

// Cross-run GAM-II: builds the judge pool from every run's final
// discriminators (seen sets replayed from swap logs), scores every
// generator, and emits reports into out_dir. Runs with one worker form
// the "single" group, the rest the GAP group for the verdict.
nlohmann::json cmd_eval(const std::vector<std::filesystem::path>& run_dirs,
                        const EvalSpec& eval, std::uint64_t seed,
                        const std::filesystem::path& out_dir);

// Sampling + mode coverage + KL score for one run; writes samples CSV and
// a JSON report into the run's reports/ directory (read-only otherwise).
nlohmann::json cmd_coverage(const std::filesystem::path& run_dir,
                            const EvalSpec& eval);

struct SweepOutcome {
  nlohmann::json summary;
  int failed_runs = 0;
};

// One run per frequency x seed; aggregate CSV of per-frequency
// validation-cost standard deviation (across workers, averaged over
// ticks) and tail curve spreads. Failures are flagged and skipped.
SweepOutcome cmd_sweep(const ExperimentConfig& base,
                       const std::vector<double>& frequencies,
                       const std::vector<std::uint64_t>& seeds,
                       const std::filesystem::path& out_root, Scheduler sched);

// Per-run JSON summary: coverage, KL score, curve spread, and (when pool
// runs are given) GAM-II scores and verdict.
nlohmann::json cmd_report(const std::filesystem::path& run_dir,
                          const std::vector<std::filesystem::path>& pool_dirs,
                          const EvalSpec& eval, std::uint64_t seed);

}  // namespace gapforge
