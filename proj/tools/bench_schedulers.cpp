// Times the OpenMP worker scheduler against the sequential reference on
// the same config and verifies the two produce bit-identical models.

#include <chrono>
#include <cstdio>
#include <cstring>

#include "gapforge/checkpoint.hpp"
#include "gapforge/experiment.hpp"
#include "gapforge/gap.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace gapforge;

namespace {

double run_timed(const GapConfig& cfg, const Dataset& data, Scheduler sched,
                 RunResult& out) {
  const auto t0 = std::chrono::steady_clock::now();
  out = run_gap(cfg, data, sched);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

bool identical(const RunResult& a, const RunResult& b) {
  if (a.group.workers.size() != b.group.workers.size()) return false;
  for (std::size_t i = 0; i < a.group.workers.size(); ++i) {
    if (serialize_params(a.group.workers[i].generator) !=
            serialize_params(b.group.workers[i].generator) ||
        serialize_params(a.group.workers[i].discriminator) !=
            serialize_params(b.group.workers[i].discriminator))
      return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  int workers = 4;
  std::uint64_t updates = 300;
  std::size_t hidden = 64;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--workers") && i + 1 < argc)
      workers = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--updates") && i + 1 < argc)
      updates = std::strtoull(argv[++i], nullptr, 10);
    else if (!std::strcmp(argv[i], "--hidden") && i + 1 < argc)
      hidden = std::strtoull(argv[++i], nullptr, 10);
    else {
      std::fprintf(stderr,
                   "usage: %s [--workers N] [--updates T] [--hidden H]\n",
                   argv[0]);
      return 1;
    }
  }

  SplittableRng data_rng(7, 0);
  auto [data, transform] = normalize_to_unit(make_mog(2500, 0.05, data_rng));

  GapConfig cfg;
  cfg.n_workers = workers;
  cfg.total_updates = updates;
  cfg.swap = workers >= 2 && workers % 2 == 0
                 ? SwapInterval::epoch_fraction(1.0)
                 : SwapInterval::disabled();
  cfg.seed = 7;
  cfg.gan.hidden = hidden;

#ifdef _OPENMP
  std::printf("omp threads: %d\n", omp_get_max_threads());
#else
  std::printf("omp threads: built without OpenMP\n");
#endif
  std::printf("config: %d workers, %llu updates, hidden %zu\n", workers,
              static_cast<unsigned long long>(updates), hidden);

  RunResult seq, par;
  const double t_seq = run_timed(cfg, data, Scheduler::kSequential, seq);
  const double t_par = run_timed(cfg, data, Scheduler::kParallel, par);

  std::printf("sequential: %8.3f s\n", t_seq);
  std::printf("parallel:   %8.3f s   speedup x%.2f\n", t_par, t_seq / t_par);
  if (!identical(seq, par)) {
    std::printf("FAIL: schedulers disagree bit-wise\n");
    return 1;
  }
  std::printf("schedulers bit-identical: yes\n");
  return 0;
}
