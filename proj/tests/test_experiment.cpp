#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gapforge/errors.hpp"
#include "gapforge/experiment.hpp"

using namespace gapforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() /
             ("gapforge-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_config(const std::string& name, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.run_name = name;
  cfg.gap.seed = seed;
  cfg.gap.n_workers = 2;
  cfg.gap.total_updates = 24;
  cfg.gap.swap = SwapInterval::every_updates(6);
  cfg.gap.eval_every = 8;
  cfg.gap.gan.hidden = 8;
  cfg.gap.gan.prior_dim = 4;
  cfg.gap.gan.batch = 16;
  cfg.dataset.kind = "mog";
  cfg.dataset.n = 300;
  cfg.eval.gam_samples = 64;
  cfg.eval.coverage_samples = 128;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("ini round-trips through the canonical form") {
  ExperimentConfig cfg = tiny_config("roundtrip", 3);
  cfg.gap.overrides[1] = WorkerOverride{PriorKind::kGaussian, 1e-3, 0.2, 0.75};
  const std::string ini = cfg.to_ini();
  const ExperimentConfig back = ExperimentConfig::from_ini(ini);
  CHECK(back.to_ini() == ini);
  CHECK(back.run_name == "roundtrip");
  CHECK(back.gap.seed == 3);
  CHECK(back.gap.overrides.at(1).prior == PriorKind::kGaussian);
  CHECK(back.gap.overrides.at(1).lr == 1e-3);
}

TEST_CASE("ini parser accepts comments and blank lines") {
  const std::string text =
      "# top comment\n"
      "[run]\n"
      "name = demo   ; trailing comment\n"
      "\n"
      "[gap]\n"
      "workers = 6\n";
  const ExperimentConfig cfg = ExperimentConfig::from_ini(text);
  CHECK(cfg.run_name == "demo");
  CHECK(cfg.gap.n_workers == 6);
}

TEST_CASE("unknown sections, keys, and bad values are rejected") {
  CHECK_THROWS_AS(ExperimentConfig::from_ini("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_ini("[gap]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_ini("[gap]\nworkers = soon\n"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_ini("workers = 2\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_ini("[gap]\nworkers\n"), ConfigError);
}

TEST_CASE("swap specs parse and print") {
  CHECK(parse_swap_spec("off").kind == SwapInterval::Kind::kDisabled);
  const SwapInterval k = parse_swap_spec("200upd");
  CHECK(k.kind == SwapInterval::Kind::kEveryKUpdates);
  CHECK(k.k == 200);
  const SwapInterval f = parse_swap_spec("0.5epoch");
  CHECK(f.kind == SwapInterval::Kind::kEpochFraction);
  CHECK(f.fraction == 0.5);
  CHECK_THROWS_AS(parse_swap_spec("weekly"), ConfigError);
  CHECK_THROWS_AS(parse_swap_spec("-1epoch"), ConfigError);
  CHECK(format_swap_spec(k) == "200upd");
  CHECK(parse_swap_spec(format_swap_spec(f)).fraction == 0.5);
}

TEST_CASE("--set overrides win over the file") {
  ExperimentConfig cfg = tiny_config("x", 1);
  cfg.apply_override("gap.workers=8");
  CHECK(cfg.gap.n_workers == 8);
  cfg.apply_override("worker.3.prior=gaussian");
  CHECK(cfg.gap.overrides.at(3).prior == PriorKind::kGaussian);
  CHECK_THROWS_AS(cfg.apply_override("no-equals"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("plainkey=1"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("gap.bogus=1"), ConfigError);
}

TEST_CASE("worker priors alternate by default and obey overrides") {
  GapConfig cfg;
  cfg.prior_policy = PriorPolicy::kAlternate;
  CHECK(worker_prior(cfg, 0).kind == PriorKind::kUniform);
  CHECK(worker_prior(cfg, 1).kind == PriorKind::kGaussian);
  CHECK(worker_prior(cfg, 2).kind == PriorKind::kUniform);
  cfg.overrides[2].prior = PriorKind::kGaussian;
  CHECK(worker_prior(cfg, 2).kind == PriorKind::kGaussian);
  cfg.prior_policy = PriorPolicy::kAllGaussian;
  CHECK(worker_prior(cfg, 0).kind == PriorKind::kGaussian);
}

TEST_CASE("dataset resolution is seeded and normalized") {
  DatasetSpec spec;
  spec.kind = "mog";
  spec.n = 300;
  const auto [d1, t1] = resolve_dataset(spec, 5);
  const auto [d2, t2] = resolve_dataset(spec, 5);
  CHECK(d1.points == d2.points);
  for (double v : d1.points.flat()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto [d3, t3] = resolve_dataset(spec, 6);
  CHECK_FALSE(d1.points == d3.points);

  spec.subsample = 50;
  const auto [d4, t4] = resolve_dataset(spec, 5);
  CHECK(d4.size() == 50);

  DatasetSpec bad;
  bad.kind = "cifar10";
  CHECK_THROWS_AS(resolve_dataset(bad, 1), ConfigError);
}

TEST_CASE("cmd_train writes the documented layout with a checksum manifest") {
  TempDir tmp("train");
  const ExperimentConfig cfg = tiny_config("demo", 7);
  const fs::path dir = cmd_train(cfg, tmp.path, Scheduler::kSequential);
  CHECK(dir == tmp.path / "demo");

  RunPaths rp{dir};
  for (const fs::path& p :
       {rp.config_snapshot(), rp.manifest(), rp.metrics(), rp.swaps(),
        rp.eval(), rp.checkpoint(0, 'G'), rp.checkpoint(0, 'D'),
        rp.checkpoint(1, 'G'), rp.checkpoint(1, 'D')})
    CHECK(fs::exists(p));

  const json manifest = json::parse(slurp(rp.manifest()));
  CHECK(manifest.at("code_version") == kCodeVersion);
  for (const auto& [rel, sum] : manifest.at("files").items())
    CHECK(file_checksum(dir / rel) == sum.get<std::string>());

  SUBCASE("snapshot reloads to the same canonical text") {
    const ExperimentConfig back = ExperimentConfig::load(rp.config_snapshot());
    CHECK(back.to_ini() == cfg.to_ini());
  }

  SUBCASE("metrics are one JSON object per update per worker") {
    std::ifstream f(rp.metrics());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
      const json j = json::parse(line);
      CHECK(j.contains("worker"));
      CHECK(j.contains("update"));
      CHECK(j.contains("d_loss"));
      CHECK(j.contains("g_loss"));
      CHECK(j.contains("d_real_acc"));
      CHECK(j.contains("d_fake_acc"));
      ++rows;
    }
    CHECK(rows == cfg.gap.total_updates * cfg.gap.n_workers);
  }

  SUBCASE("swap log pairs parse back") {
    std::ifstream f(rp.swaps());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
      const json j = json::parse(line);
      CHECK(j.at("pairs").size() == 1);
      ++rows;
    }
    CHECK(rows == (cfg.gap.total_updates - 1) / 6);
  }
}

TEST_CASE("reruns and both schedulers produce byte-identical outputs") {
  TempDir tmp("determinism");
  const ExperimentConfig cfg = tiny_config("det", 11);
  const fs::path a = cmd_train(cfg, tmp.path / "a", Scheduler::kParallel);
  const fs::path b = cmd_train(cfg, tmp.path / "b", Scheduler::kParallel);
  const fs::path c = cmd_train(cfg, tmp.path / "c", Scheduler::kSequential);

  for (const char* rel : {"metrics.jsonl", "swaps.jsonl", "eval.jsonl",
                          "worker0-G.ckpt", "worker0-D.ckpt", "worker1-G.ckpt",
                          "worker1-D.ckpt", "config.snapshot"}) {
    CHECK(slurp(a / rel) == slurp(b / rel));
    CHECK(slurp(a / rel) == slurp(c / rel));
  }
}

TEST_CASE("cmd_eval scores pooled runs and stays read-only") {
  TempDir tmp("eval");
  ExperimentConfig single = tiny_config("single", 21);
  single.gap.n_workers = 1;
  single.gap.swap = SwapInterval::disabled();
  ExperimentConfig gap = tiny_config("gap2", 22);

  const fs::path sdir = cmd_train(single, tmp.path, Scheduler::kSequential);
  const fs::path gdir = cmd_train(gap, tmp.path, Scheduler::kSequential);

  auto list_files = [](const fs::path& dir) {
    std::map<std::string, std::string> sums;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file())
        sums[e.path().generic_string()] = file_checksum(e.path());
    return sums;
  };
  const auto before_s = list_files(sdir);
  const auto before_g = list_files(gdir);

  EvalSpec eval;
  eval.gam_samples = 64;
  const json report =
      cmd_eval({sdir, gdir}, eval, 1, tmp.path / "eval-out");

  CHECK(list_files(sdir) == before_s);
  CHECK(list_files(gdir) == before_g);
  CHECK(fs::exists(tmp.path / "eval-out" / "error_table.csv"));
  CHECK(fs::exists(tmp.path / "eval-out" / "gam2_report.json"));

  CHECK(report.at("generators").size() == 3);  // 1 single + 2 gap workers
  CHECK(report.at("groups").contains("single"));
  CHECK(report.at("groups").contains("gap2"));
  CHECK_FALSE(report.at("verdict").is_null());
  const std::string v = report.at("verdict").at("avg").get<std::string>();
  CHECK((v == "strongly_helps" || v == "helps" || v == "neither"));

  SUBCASE("error table rows are generators x judges") {
    std::ifstream f(tmp.path / "eval-out" / "error_table.csv");
    std::string line;
    std::getline(f, line);  // header
    std::size_t rows = 0;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 3 * 3);
  }
}

TEST_CASE("evaluating a gap run against only its own judges fails eligibility") {
  TempDir tmp("eligibility");
  ExperimentConfig cfg = tiny_config("closed", 23);
  cfg.gap.swap = SwapInterval::every_updates(1);  // everyone sees everyone
  const fs::path dir = cmd_train(cfg, tmp.path, Scheduler::kSequential);
  EvalSpec eval;
  eval.gam_samples = 32;
  CHECK_THROWS(cmd_eval({dir}, eval, 1, tmp.path / "out"));
}

TEST_CASE("cmd_coverage emits the sample CSV and per-worker reports") {
  TempDir tmp("coverage");
  const ExperimentConfig cfg = tiny_config("cov", 31);
  const fs::path dir = cmd_train(cfg, tmp.path, Scheduler::kSequential);

  EvalSpec eval;
  eval.coverage_samples = 200;
  const json report = cmd_coverage(dir, eval);

  CHECK(report.at("per_worker").size() == 2);
  CHECK(report.at("pooled").at("total_modes") == 25);
  // an undertrained run cannot cover the grid
  CHECK(report.at("pooled").at("covered_modes").get<int>() < 25);

  std::ifstream f(RunPaths{dir}.reports() / "samples.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "x,y");
  std::size_t rows = 0;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == 200);
  CHECK(fs::exists(RunPaths{dir}.reports() / "coverage.json"));
}

TEST_CASE("cmd_sweep trains a grid and aggregates per frequency") {
  TempDir tmp("sweep");
  ExperimentConfig base = tiny_config("swp", 41);
  base.gap.total_updates = 16;
  const SweepOutcome outcome =
      cmd_sweep(base, {0.5}, {1, 2, 3}, tmp.path, Scheduler::kSequential);
  CHECK(outcome.failed_runs == 0);

  const fs::path sweep_dir = tmp.path / "swp-sweep";
  CHECK(fs::exists(sweep_dir / "aggregate.csv"));
  CHECK(fs::exists(sweep_dir / "aggregate.json"));
  int runs = 0;
  for (const auto& e : fs::directory_iterator(sweep_dir))
    if (e.is_directory()) ++runs;
  CHECK(runs == 3);

  const auto& row = outcome.summary.at("frequencies").at(0);
  CHECK(row.at("frequency") == 0.5);
  CHECK(row.at("n_runs") == 3);
  CHECK(row.at("mean_val_cost_std").get<double>() >= 0.0);

  CHECK_THROWS_AS(cmd_sweep(base, {}, {1}, tmp.path, Scheduler::kSequential),
                  ConfigError);
}

TEST_CASE("cmd_report assembles the summary JSON") {
  TempDir tmp("report");
  ExperimentConfig single = tiny_config("rsingle", 51);
  single.gap.n_workers = 1;
  single.gap.swap = SwapInterval::disabled();
  ExperimentConfig gap = tiny_config("rgap", 52);
  const fs::path sdir = cmd_train(single, tmp.path, Scheduler::kSequential);
  const fs::path gdir = cmd_train(gap, tmp.path, Scheduler::kSequential);

  EvalSpec eval;
  eval.gam_samples = 32;
  eval.coverage_samples = 100;
  const json summary = cmd_report(gdir, {sdir}, eval, 1);
  CHECK(summary.contains("coverage"));
  CHECK(summary.contains("kl_score"));
  CHECK(summary.contains("spread"));
  CHECK_FALSE(summary.at("gam2").is_null());
  CHECK(fs::exists(RunPaths{gdir}.reports() / "summary.json"));
}

#ifdef GAPFORGE_CLI_PATH
TEST_CASE("CLI exit codes") {
  TempDir tmp("cli");
  const std::string cli = GAPFORGE_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  };

  CHECK(run("--help") == 0);
  CHECK(run("train --config /nonexistent.ini") == 3);
  CHECK(run("nonsense-subcommand") == 1);

  // config error: odd worker count with swapping on
  const fs::path bad = tmp.path / "bad.ini";
  {
    std::ofstream f(bad);
    f << "[gap]\nworkers = 3\n";
  }
  CHECK(run("train --config " + bad.string() + " --out " +
            (tmp.path / "o").string()) == 1);

  const fs::path good = tmp.path / "good.ini";
  {
    std::ofstream f(good);
    f << tiny_config("cli-run", 61).to_ini();
  }
  CHECK(run("train --config " + good.string() + " --out " +
            (tmp.path / "o").string() + " --sequential") == 0);
  CHECK(fs::exists(tmp.path / "o" / "cli-run" / "manifest.json"));

  // GAPFORGE_OUT is the default output root
  const std::string env_cmd = "GAPFORGE_OUT=" + (tmp.path / "envout").string() +
                              " " + cli + " train --config " + good.string() +
                              " --sequential >/dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
  CHECK(fs::exists(tmp.path / "envout" / "cli-run" / "manifest.json"));
}
#endif
