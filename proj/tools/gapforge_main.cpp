#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gapforge/errors.hpp"
#include "gapforge/experiment.hpp"

namespace fs = std::filesystem;
using namespace gapforge;

namespace {

fs::path default_out_root() {
  if (const char* env = std::getenv("GAPFORGE_OUT")) return fs::path(env);
  return fs::path("out");
}

struct CommonOpts {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  std::string swap_every;
  bool sequential = false;
  std::vector<std::string> sets;
};

ExperimentConfig build_config(const CommonOpts& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = ExperimentConfig::load(o.config_path);
  if (o.seed_set) cfg.gap.seed = o.seed;
  if (o.workers > 0) cfg.gap.n_workers = o.workers;
  if (!o.swap_every.empty()) cfg.gap.swap = parse_swap_spec(o.swap_every);
  for (const auto& s : o.sets) cfg.apply_override(s);
  return cfg;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string tok =
        csv.substr(start, comma == std::string::npos ? csv.npos : comma - start);
    if (!tok.empty()) out.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (double v : parse_double_list(csv))
    out.push_back(static_cast<std::uint64_t>(v));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gapforge: populations of small GANs with discriminator swaps"};
  app.require_subcommand(1);

  CommonOpts o;
  EvalSpec eval;

  auto add_common = [&](CLI::App* cmd, bool with_train_flags) {
    cmd->add_option("--out", o.out, "output root (default $GAPFORGE_OUT or ./out)");
    cmd->add_option("--seed", o.seed, "seed override")
        ->each([&](const std::string&) { o.seed_set = true; });
    if (with_train_flags) {
      cmd->add_option("--config", o.config_path, "experiment config file");
      cmd->add_option("--workers", o.workers, "worker count override");
      cmd->add_option("--swap-every", o.swap_every,
                      "swap interval: off, <K>upd or <F>epoch");
      cmd->add_flag("--sequential", o.sequential,
                    "use the single-threaded reference scheduler");
      cmd->add_option("--set", o.sets, "config override section.key=value")
          ->take_all();
    }
  };
  auto add_eval_flags = [&](CLI::App* cmd) {
    cmd->add_option("--gam-samples", eval.gam_samples, "samples per generator");
    cmd->add_option("--samples", eval.coverage_samples, "coverage samples");
    cmd->add_option("--radius", eval.coverage_radius, "coverage radius multiplier");
    cmd->add_option("--min-count", eval.coverage_min_count, "coverage min count");
    cmd->add_option("--tail", eval.spread_tail, "curve spread tail fraction");
  };

  auto* train = app.add_subcommand("train", "train one experiment");
  add_common(train, true);

  auto* evalc = app.add_subcommand("eval", "GAM-II over one or more runs");
  std::vector<std::string> eval_dirs;
  evalc->add_option("runs", eval_dirs, "run directories")->required();
  add_common(evalc, false);
  add_eval_flags(evalc);

  auto* coverage = app.add_subcommand("coverage", "mode coverage for one run");
  std::string coverage_dir;
  coverage->add_option("run", coverage_dir, "run directory")->required();
  add_eval_flags(coverage);

  auto* sweep = app.add_subcommand("sweep", "swap-frequency sweep");
  std::string freq_csv = "0.1,0.3,0.5,0.7,1.0";
  std::string seed_csv = "1,2,3";
  sweep->add_option("--frequencies", freq_csv, "comma list of epoch fractions");
  sweep->add_option("--seeds", seed_csv, "comma list of seeds");
  add_common(sweep, true);

  auto* report = app.add_subcommand("report", "summary JSON for one run");
  std::string report_dir;
  std::vector<std::string> pool_dirs;
  report->add_option("run", report_dir, "run directory")->required();
  report->add_option("--pool", pool_dirs, "judge pool run directories")
      ->take_all();
  add_common(report, false);
  add_eval_flags(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const fs::path out_root = o.out.empty() ? default_out_root() : fs::path(o.out);
  const Scheduler sched =
      o.sequential ? Scheduler::kSequential : Scheduler::kParallel;

  try {
    if (train->parsed()) {
      const fs::path dir = cmd_train(build_config(o), out_root, sched);
      std::cout << dir.generic_string() << "\n";
    } else if (evalc->parsed()) {
      std::vector<fs::path> dirs(eval_dirs.begin(), eval_dirs.end());
      const auto report_json =
          cmd_eval(dirs, eval, o.seed, out_root / "eval-report");
      std::cout << report_json.dump(2) << "\n";
    } else if (coverage->parsed()) {
      std::cout << cmd_coverage(coverage_dir, eval).dump(2) << "\n";
    } else if (sweep->parsed()) {
      const auto outcome =
          cmd_sweep(build_config(o), parse_double_list(freq_csv),
                    parse_u64_list(seed_csv), out_root, sched);
      std::cout << outcome.summary.dump(2) << "\n";
      if (outcome.failed_runs > 0) {
        std::cerr << outcome.failed_runs << " sweep run(s) failed\n";
        return 2;
      }
    } else if (report->parsed()) {
      std::vector<fs::path> pool(pool_dirs.begin(), pool_dirs.end());
      std::cout << cmd_report(report_dir, pool, eval, o.seed).dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
