#include "gapforge/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gapforge/checkpoint.hpp"
#include "gapforge/errors.hpp"
#include "gapforge/metrics.hpp"

namespace gapforge {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- INI parsing ----------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid number '" + v + "' for " + where);
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer '" + v + "' for " + where);
  }
}

PriorKind parse_prior_kind(const std::string& v, const std::string& where) {
  if (v == "uniform") return PriorKind::kUniform;
  if (v == "gaussian") return PriorKind::kGaussian;
  throw ConfigError("invalid prior '" + v + "' for " + where);
}

// Single point of truth for every config key; used by the file parser and
// by --set overrides alike.
void set_key(ExperimentConfig& c, const std::string& section,
             const std::string& key, const std::string& value) {
  const std::string where = section + "." + key;
  if (section == "run") {
    if (key == "name") { c.run_name = value; return; }
    if (key == "seed") { c.gap.seed = parse_u64(value, where); return; }
  } else if (section == "dataset") {
    if (key == "kind") { c.dataset.kind = value; return; }
    if (key == "path") { c.dataset.path = value; return; }
    if (key == "n") { c.dataset.n = parse_u64(value, where); return; }
    if (key == "std") { c.dataset.std_dev = parse_double(value, where); return; }
    if (key == "subsample") { c.dataset.subsample = parse_u64(value, where); return; }
    if (key == "val_fraction") { c.dataset.val_fraction = parse_double(value, where); return; }
  } else if (section == "gap") {
    if (key == "workers") { c.gap.n_workers = static_cast<int>(parse_u64(value, where)); return; }
    if (key == "total_updates") { c.gap.total_updates = parse_u64(value, where); return; }
    if (key == "swap") { c.gap.swap = parse_swap_spec(value); return; }
    if (key == "eval_every") { c.gap.eval_every = parse_u64(value, where); return; }
  } else if (section == "gan") {
    if (key == "hidden") { c.gap.gan.hidden = parse_u64(value, where); return; }
    if (key == "prior_dim") { c.gap.gan.prior_dim = parse_u64(value, where); return; }
    if (key == "batch") { c.gap.gan.batch = parse_u64(value, where); return; }
    if (key == "lr") { c.gap.gan.lr = parse_double(value, where); return; }
    if (key == "beta1") { c.gap.gan.beta1 = parse_double(value, where); return; }
    if (key == "beta2") { c.gap.gan.beta2 = parse_double(value, where); return; }
    if (key == "adam_eps") { c.gap.gan.adam_eps = parse_double(value, where); return; }
    if (key == "clip_norm") { c.gap.gan.clip_norm = parse_double(value, where); return; }
    if (key == "sigma0") { c.gap.noise.sigma0 = parse_double(value, where); return; }
    if (key == "noise_decay_until") { c.gap.noise.decay_until_fraction = parse_double(value, where); return; }
    if (key == "prior") {
      if (value == "alternate") { c.gap.prior_policy = PriorPolicy::kAlternate; return; }
      if (value == "uniform") { c.gap.prior_policy = PriorPolicy::kAllUniform; return; }
      if (value == "gaussian") { c.gap.prior_policy = PriorPolicy::kAllGaussian; return; }
      throw ConfigError("invalid prior policy '" + value + "'");
    }
  } else if (section == "eval") {
    if (key == "gam_samples") { c.eval.gam_samples = parse_u64(value, where); return; }
    if (key == "coverage_samples") { c.eval.coverage_samples = parse_u64(value, where); return; }
    if (key == "coverage_radius") { c.eval.coverage_radius = parse_double(value, where); return; }
    if (key == "coverage_min_count") { c.eval.coverage_min_count = parse_u64(value, where); return; }
    if (key == "spread_tail") { c.eval.spread_tail = parse_double(value, where); return; }
  } else if (section.rfind("worker.", 0) == 0) {
    const int id = static_cast<int>(parse_u64(section.substr(7), section));
    WorkerOverride& ov = c.gap.overrides[id];
    if (key == "prior") { ov.prior = parse_prior_kind(value, where); return; }
    if (key == "lr") { ov.lr = parse_double(value, where); return; }
    if (key == "sigma0") { ov.sigma0 = parse_double(value, where); return; }
    if (key == "noise_decay_until") { ov.decay_until = parse_double(value, where); return; }
  } else {
    throw ConfigError("unknown config section [" + section + "]");
  }
  throw ConfigError("unknown config key '" + where + "'");
}

}  // namespace

SwapInterval parse_swap_spec(const std::string& spec) {
  if (spec == "off") return SwapInterval::disabled();
  if (spec.size() > 3 && spec.ends_with("upd")) {
    return SwapInterval::every_updates(
        parse_u64(spec.substr(0, spec.size() - 3), "swap"));
  }
  if (spec.size() > 5 && spec.ends_with("epoch")) {
    const double f = parse_double(spec.substr(0, spec.size() - 5), "swap");
    if (!(f > 0.0)) throw ConfigError("swap epoch fraction must be positive");
    return SwapInterval::epoch_fraction(f);
  }
  throw ConfigError("swap spec must be 'off', '<K>upd' or '<F>epoch', got '" +
                    spec + "'");
}

std::string format_swap_spec(const SwapInterval& s) {
  switch (s.kind) {
    case SwapInterval::Kind::kDisabled:
      return "off";
    case SwapInterval::Kind::kEveryKUpdates:
      return std::to_string(s.k) + "upd";
    case SwapInterval::Kind::kEpochFraction:
      return fmt_double(s.fraction) + "epoch";
  }
  return "off";
}

ExperimentConfig ExperimentConfig::from_ini(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("bad section header at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key=value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("key outside any section at line " + std::to_string(line_no));
    set_key(c, section, key, value);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_ini(ss.str());
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream out;
  out << "[run]\n"
      << "name = " << run_name << "\n"
      << "seed = " << gap.seed << "\n\n";
  out << "[dataset]\n"
      << "kind = " << dataset.kind << "\n";
  if (!dataset.path.empty()) out << "path = " << dataset.path << "\n";
  out << "n = " << dataset.n << "\n"
      << "std = " << fmt_double(dataset.std_dev) << "\n"
      << "subsample = " << dataset.subsample << "\n"
      << "val_fraction = " << fmt_double(dataset.val_fraction) << "\n\n";
  out << "[gap]\n"
      << "workers = " << gap.n_workers << "\n"
      << "total_updates = " << gap.total_updates << "\n"
      << "swap = " << format_swap_spec(gap.swap) << "\n"
      << "eval_every = " << gap.eval_every << "\n\n";
  out << "[gan]\n"
      << "hidden = " << gap.gan.hidden << "\n"
      << "prior_dim = " << gap.gan.prior_dim << "\n"
      << "batch = " << gap.gan.batch << "\n"
      << "lr = " << fmt_double(gap.gan.lr) << "\n"
      << "beta1 = " << fmt_double(gap.gan.beta1) << "\n"
      << "beta2 = " << fmt_double(gap.gan.beta2) << "\n"
      << "adam_eps = " << fmt_double(gap.gan.adam_eps) << "\n"
      << "clip_norm = " << fmt_double(gap.gan.clip_norm) << "\n"
      << "sigma0 = " << fmt_double(gap.noise.sigma0) << "\n"
      << "noise_decay_until = " << fmt_double(gap.noise.decay_until_fraction)
      << "\n"
      << "prior = "
      << (gap.prior_policy == PriorPolicy::kAlternate     ? "alternate"
          : gap.prior_policy == PriorPolicy::kAllUniform  ? "uniform"
                                                          : "gaussian")
      << "\n\n";
  out << "[eval]\n"
      << "gam_samples = " << eval.gam_samples << "\n"
      << "coverage_samples = " << eval.coverage_samples << "\n"
      << "coverage_radius = " << fmt_double(eval.coverage_radius) << "\n"
      << "coverage_min_count = " << eval.coverage_min_count << "\n"
      << "spread_tail = " << fmt_double(eval.spread_tail) << "\n";
  for (const auto& [id, ov] : gap.overrides) {
    out << "\n[worker." << id << "]\n";
    if (ov.prior)
      out << "prior = "
          << (*ov.prior == PriorKind::kUniform ? "uniform" : "gaussian") << "\n";
    if (ov.lr) out << "lr = " << fmt_double(*ov.lr) << "\n";
    if (ov.sigma0) out << "sigma0 = " << fmt_double(*ov.sigma0) << "\n";
    if (ov.decay_until)
      out << "noise_decay_until = " << fmt_double(*ov.decay_until) << "\n";
  }
  return out.str();
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  const std::string lhs = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto dot = lhs.rfind('.');
  if (dot == std::string::npos)
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  set_key(*this, lhs.substr(0, dot), lhs.substr(dot + 1), value);
}

void ExperimentConfig::validate() const {
  if (run_name.empty() || run_name.find('/') != std::string::npos)
    throw ConfigError("run name must be a nonempty path-free string");
  if (dataset.kind != "mog" && dataset.kind != "r15" &&
      dataset.kind != "r15_synthetic")
    throw ConfigError("unknown dataset kind '" + dataset.kind + "'");
  if (dataset.kind == "r15" && dataset.path.empty())
    throw ConfigError("dataset kind r15 requires a path");
  if (!(dataset.val_fraction > 0.0 && dataset.val_fraction < 1.0))
    throw ConfigError("val_fraction must be in (0,1)");
  if (gap.n_workers >= 1000) throw ConfigError("worker count limit is 999");
  GapConfig g = gap;
  g.val_fraction = dataset.val_fraction;
  g.validate();
}

Prior worker_prior(const GapConfig& cfg, int worker) {
  Prior p;
  p.dim = cfg.gan.prior_dim;
  switch (cfg.prior_policy) {
    case PriorPolicy::kAllUniform: p.kind = PriorKind::kUniform; break;
    case PriorPolicy::kAllGaussian: p.kind = PriorKind::kGaussian; break;
    case PriorPolicy::kAlternate:
      p.kind = worker % 2 == 0 ? PriorKind::kUniform : PriorKind::kGaussian;
      break;
  }
  if (auto it = cfg.overrides.find(worker); it != cfg.overrides.end())
    if (it->second.prior) p.kind = *it->second.prior;
  return p;
}

std::pair<Dataset, UnitTransform> resolve_dataset(const DatasetSpec& spec,
                                                  std::uint64_t seed) {
  const SplittableRng root(seed, 0);
  SplittableRng gen = root.split(3);
  Dataset d;
  if (spec.kind == "mog") {
    d = make_mog(spec.n, spec.std_dev, gen);
  } else if (spec.kind == "r15") {
    d = load_r15(spec.path);
  } else if (spec.kind == "r15_synthetic") {
    d = make_r15_like(spec.n, spec.std_dev, gen);
  } else {
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
  }
  if (spec.subsample > 0) {
    SplittableRng sub = root.split(8);
    d = subsample(d, spec.subsample, sub);
  }
  return normalize_to_unit(d);
}

// ---- file helpers ---------------------------------------------------------

std::string file_checksum(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for checksum: " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[8192];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[32];
  std::snprintf(out, sizeof out, "fnv1a:%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  for (const auto& r : rows) f << r.dump() << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  std::vector<json> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(json::parse(line));
  }
  return rows;
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

}  // namespace

// ---- train ----------------------------------------------------------------

std::filesystem::path cmd_train(const ExperimentConfig& cfg,
                                const fs::path& out_root, Scheduler sched) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunPaths rp{out_root / cfg.run_name};
  std::error_code ec;
  fs::remove_all(rp.dir, ec);
  fs::create_directories(rp.reports());

  write_text(rp.config_snapshot(), cfg.to_ini());

  auto [data, transform] = resolve_dataset(cfg.dataset, cfg.gap.seed);
  export_csv(data, rp.dir / "dataset.csv");  // plot-ready ground truth
  GapConfig gap = cfg.gap;
  gap.val_fraction = cfg.dataset.val_fraction;
  const RunResult res = run_gap(gap, data, sched);

  std::vector<json> metric_rows;
  metric_rows.reserve(res.metrics.size());
  for (const auto& m : res.metrics) {
    metric_rows.push_back({{"worker", m.worker},
                           {"update", m.update_index},
                           {"d_loss", m.d_loss},
                           {"g_loss", m.g_loss},
                           {"d_real_acc", m.d_real_acc},
                           {"d_fake_acc", m.d_fake_acc}});
  }
  write_jsonl(rp.metrics(), metric_rows);

  std::vector<json> eval_rows;
  for (const auto& e : res.eval_records) {
    eval_rows.push_back({{"worker", e.worker},
                         {"update", e.update},
                         {"train_cost", e.train_cost},
                         {"val_cost", e.val_cost}});
  }
  write_jsonl(rp.eval(), eval_rows);

  std::vector<json> swap_rows;
  for (const auto& s : res.group.swap_log) {
    json pairs = json::array();
    for (const auto& [a, b] : s.pairs) pairs.push_back({a, b});
    swap_rows.push_back({{"update", s.at_update}, {"pairs", pairs}});
  }
  write_jsonl(rp.swaps(), swap_rows);

  for (const auto& w : res.group.workers) {
    save_params(rp.checkpoint(w.id, 'G'), w.generator);
    save_params(rp.checkpoint(w.id, 'D'), w.discriminator);
  }

  const auto dt = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  json files;
  for (const auto& entry : fs::recursive_directory_iterator(rp.dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), rp.dir).generic_string();
    if (rel == "manifest.json") continue;
    files[rel] = file_checksum(entry.path());
  }
  write_json(rp.manifest(),
             {{"code_version", kCodeVersion},
              {"duration_seconds", dt},
              {"resolved_swap_updates", res.resolved_swap_k},
              {"updates_per_epoch", res.updates_per_epoch},
              {"files", files}});
  return rp.dir;
}

// ---- run loading ----------------------------------------------------------

namespace {

struct LoadedRun {
  fs::path dir;
  std::string name;
  ExperimentConfig cfg;
  std::vector<ModelParams> generators;
  std::vector<ModelParams> discriminators;
  std::vector<int> lineage;             // local lineage held by each worker
  std::vector<std::set<int>> seen;      // local lineages each worker trained on
};

LoadedRun load_run(const fs::path& dir) {
  LoadedRun r;
  r.dir = dir;
  r.cfg = ExperimentConfig::load(RunPaths{dir}.config_snapshot());
  r.name = r.cfg.run_name;
  const int n = r.cfg.gap.n_workers;
  RunPaths rp{dir};
  for (int i = 0; i < n; ++i) {
    r.generators.push_back(load_params(rp.checkpoint(i, 'G')));
    r.discriminators.push_back(load_params(rp.checkpoint(i, 'D')));
  }

  r.lineage.resize(n);
  r.seen.assign(n, {});
  for (int i = 0; i < n; ++i) {
    r.lineage[i] = i;
    r.seen[i] = {i};
  }
  for (const auto& event : read_jsonl(rp.swaps())) {
    for (const auto& p : event.at("pairs")) {
      const int a = p.at(0).get<int>();
      const int b = p.at(1).get<int>();
      if (a < 0 || a >= n || b < 0 || b >= n)
        throw IoError("swap log names unknown worker in " + dir.string());
      std::swap(r.lineage[a], r.lineage[b]);
      r.seen[a].insert(r.lineage[a]);
      r.seen[b].insert(r.lineage[b]);
    }
  }
  return r;
}

constexpr int kRunStride = 1000;  // global id = run_index * stride + local

std::string verdict_name(GamVerdict v) {
  switch (v) {
    case GamVerdict::kStronglyHelps: return "strongly_helps";
    case GamVerdict::kHelps: return "helps";
    case GamVerdict::kNeither: return "neither";
  }
  return "neither";
}

struct CurveStats {
  double mean_val_std = 0.0;   // std across workers, averaged over ticks
  double mean_spread = 0.0;    // tail curve spread, averaged over workers
};

CurveStats curve_stats_from_eval_log(const fs::path& run_dir, double tail) {
  const auto rows = read_jsonl(RunPaths{run_dir}.eval());
  std::map<std::uint64_t, std::vector<double>> per_tick;
  std::map<int, std::vector<double>> train_by_worker, val_by_worker;
  for (const auto& row : rows) {
    const int w = row.at("worker").get<int>();
    const auto t = row.at("update").get<std::uint64_t>();
    const double tc = row.at("train_cost").get<double>();
    const double vc = row.at("val_cost").get<double>();
    per_tick[t].push_back(vc);
    train_by_worker[w].push_back(tc);
    val_by_worker[w].push_back(vc);
  }
  if (per_tick.empty()) throw IoError("empty eval log in " + run_dir.string());

  CurveStats s;
  for (const auto& [t, costs] : per_tick) {
    double mean = 0.0;
    for (double c : costs) mean += c;
    mean /= static_cast<double>(costs.size());
    double var = 0.0;
    for (double c : costs) var += (c - mean) * (c - mean);
    var /= static_cast<double>(costs.size());
    s.mean_val_std += std::sqrt(var);
  }
  s.mean_val_std /= static_cast<double>(per_tick.size());

  for (const auto& [w, train] : train_by_worker) {
    s.mean_spread += curve_spread(train, val_by_worker.at(w), tail);
  }
  s.mean_spread /= static_cast<double>(train_by_worker.size());
  return s;
}

}  // namespace

// ---- eval -----------------------------------------------------------------

nlohmann::json cmd_eval(const std::vector<fs::path>& run_dirs,
                        const EvalSpec& eval, std::uint64_t seed,
                        const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("eval: no run directories given");

  std::vector<LoadedRun> runs;
  runs.reserve(run_dirs.size());
  for (const auto& d : run_dirs) runs.push_back(load_run(d));

  std::vector<GenEntry> gens;
  std::vector<Judge> judges;
  for (std::size_t ri = 0; ri < runs.size(); ++ri) {
    const auto& run = runs[ri];
    const int base = static_cast<int>(ri) * kRunStride;
    for (int i = 0; i < run.cfg.gap.n_workers; ++i) {
      if (run.generators[i].out_dim() != 2 ||
          run.discriminators[i].in_dim() != 2)
        throw ConfigError("incompatible checkpoint shapes in pool: " +
                          run.dir.string());
      GenEntry g;
      g.worker_id = base + i;
      g.generator = run.generators[i];
      g.prior = worker_prior(run.cfg.gap, i);
      for (int s : run.seen[i]) g.seen.insert(base + s);
      gens.push_back(std::move(g));
      judges.push_back({base + run.lineage[i], run.discriminators[i]});
    }
  }

  SplittableRng rng = SplittableRng(seed, 0).split(6);
  const ErrorTable table = build_error_table(gens, judges, eval.gam_samples, rng);
  const auto scores = gam2_scores(table);

  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "error_table.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write error_table.csv");
    f << "generator,judge,error,eligible\n";
    f.precision(17);
    for (std::size_t g = 0; g < gens.size(); ++g)
      for (std::size_t d = 0; d < judges.size(); ++d)
        f << table.generator_ids[g] << ',' << table.judge_lineages[d] << ','
          << table.errors(g, d) << ',' << (table.is_eligible(g, d) ? 1 : 0)
          << '\n';
  }

  json per_gen = json::array();
  std::vector<Gam2Score> single_scores, gap_scores;
  json groups;
  std::size_t gi = 0;
  for (std::size_t ri = 0; ri < runs.size(); ++ri) {
    const auto& run = runs[ri];
    const bool is_single = run.cfg.gap.n_workers == 1;
    double avg_min = 1.0, avg_max = 0.0, worst_min = 1.0, worst_max = 0.0;
    for (int i = 0; i < run.cfg.gap.n_workers; ++i, ++gi) {
      const auto& s = scores[gi];
      per_gen.push_back({{"run", run.name},
                         {"worker", i},
                         {"id", table.generator_ids[gi]},
                         {"avg", s.avg},
                         {"worst", s.worst}});
      (is_single ? single_scores : gap_scores).push_back(s);
      avg_min = std::min(avg_min, s.avg);
      avg_max = std::max(avg_max, s.avg);
      worst_min = std::min(worst_min, s.worst);
      worst_max = std::max(worst_max, s.worst);
    }
    groups[run.name] = {{"workers", run.cfg.gap.n_workers},
                        {"avg_min", avg_min},
                        {"avg_max", avg_max},
                        {"worst_min", worst_min},
                        {"worst_max", worst_max}};
  }

  json verdict;
  if (!single_scores.empty() && !gap_scores.empty()) {
    verdict = {{"avg", verdict_name(gap_verdict(single_scores, gap_scores,
                                                GamCriterion::kAvg))},
               {"worst", verdict_name(gap_verdict(single_scores, gap_scores,
                                                  GamCriterion::kWorst))}};
  } else {
    verdict = nullptr;
  }

  const std::size_t best = rank_best(scores);
  json report = {{"generators", per_gen},
                 {"groups", groups},
                 {"verdict", verdict},
                 {"best", per_gen[best]},
                 {"gam_samples", eval.gam_samples}};
  write_json(out_dir / "gam2_report.json", report);
  return report;
}

// ---- coverage -------------------------------------------------------------

nlohmann::json cmd_coverage(const fs::path& run_dir, const EvalSpec& eval) {
  const LoadedRun run = load_run(run_dir);
  auto [data, transform] = resolve_dataset(run.cfg.dataset, run.cfg.gap.seed);
  if (data.modes.empty())
    throw ConfigError("dataset has no mode ground truth: " + run.cfg.dataset.kind);

  const int n = run.cfg.gap.n_workers;
  const SplittableRng root(run.cfg.gap.seed, 0);
  std::vector<Matrix> samples(n);
  for (int i = 0; i < n; ++i) {
    SplittableRng rng = root.split(11).split(static_cast<std::uint64_t>(i));
    const Prior prior = worker_prior(run.cfg.gap, i);
    const Matrix z = sample_prior(prior, eval.coverage_samples, rng);
    samples[i] = mlp_eval(run.generators[i], z);
  }

  json per_worker = json::array();
  for (int i = 0; i < n; ++i) {
    const CoverageReport r = mode_coverage(samples[i], data.modes,
                                           eval.coverage_radius,
                                           eval.coverage_min_count);
    per_worker.push_back({{"worker", i},
                          {"covered_modes", r.covered_modes},
                          {"total_modes", r.total_modes},
                          {"high_quality_fraction", r.high_quality_fraction},
                          {"kl_score", mode_kl_score(samples[i], data.modes)},
                          {"per_mode_counts", r.per_mode_counts}});
  }

  // pooled view across all workers (the overlap the figures show)
  Matrix pooled(static_cast<std::size_t>(n) * eval.coverage_samples, 2);
  for (int i = 0; i < n; ++i)
    for (std::size_t s = 0; s < eval.coverage_samples; ++s) {
      pooled(i * eval.coverage_samples + s, 0) = samples[i](s, 0);
      pooled(i * eval.coverage_samples + s, 1) = samples[i](s, 1);
    }
  const CoverageReport pooled_r = mode_coverage(
      pooled, data.modes, eval.coverage_radius, eval.coverage_min_count);

  // sample CSV: exactly coverage_samples rows, drawn evenly across workers
  RunPaths rp{run_dir};
  fs::create_directories(rp.reports());
  {
    std::ofstream f(rp.reports() / "samples.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write samples.csv");
    f << "x,y\n";
    f.precision(17);
    for (std::size_t s = 0; s < eval.coverage_samples; ++s) {
      const int w = static_cast<int>(s % n);
      const std::size_t row = s / n;
      f << samples[w](row, 0) << ',' << samples[w](row, 1) << '\n';
    }
  }

  json report = {{"run", run.name},
                 {"samples_per_worker", eval.coverage_samples},
                 {"radius_multiplier", eval.coverage_radius},
                 {"min_count", eval.coverage_min_count},
                 {"per_worker", per_worker},
                 {"pooled",
                  {{"covered_modes", pooled_r.covered_modes},
                   {"total_modes", pooled_r.total_modes},
                   {"high_quality_fraction", pooled_r.high_quality_fraction},
                   {"kl_score", mode_kl_score(pooled, data.modes)}}}};
  write_json(rp.reports() / "coverage.json", report);

  {
    std::ofstream f(rp.reports() / "coverage.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write coverage.csv");
    f << "worker,covered_modes,total_modes,high_quality_fraction,kl_score\n";
    f.precision(17);
    for (const auto& row : per_worker)
      f << row.at("worker").get<int>() << ','
        << row.at("covered_modes").get<std::size_t>() << ','
        << row.at("total_modes").get<std::size_t>() << ','
        << row.at("high_quality_fraction").get<double>() << ','
        << row.at("kl_score").get<double>() << '\n';
    f << "pooled," << pooled_r.covered_modes << ',' << pooled_r.total_modes
      << ',' << pooled_r.high_quality_fraction << ','
      << report.at("pooled").at("kl_score").get<double>() << '\n';
  }
  return report;
}

// ---- sweep ----------------------------------------------------------------

SweepOutcome cmd_sweep(const ExperimentConfig& base,
                       const std::vector<double>& frequencies,
                       const std::vector<std::uint64_t>& seeds,
                       const fs::path& out_root, Scheduler sched) {
  if (frequencies.empty()) throw ConfigError("sweep: empty frequency list");
  if (seeds.empty()) throw ConfigError("sweep: empty seed list");
  for (double f : frequencies)
    if (!(f > 0.0)) throw ConfigError("sweep: frequencies must be positive");

  const fs::path sweep_dir = out_root / (base.run_name + "-sweep");
  fs::create_directories(sweep_dir);

  SweepOutcome outcome;
  json rows = json::array();
  std::ostringstream csv;
  csv << "frequency,n_runs,n_failed,mean_val_cost_std,mean_curve_spread\n";
  for (double f : frequencies) {
    double sum_std = 0.0, sum_spread = 0.0;
    int ok = 0, failed = 0;
    json run_names = json::array();
    for (std::uint64_t s : seeds) {
      ExperimentConfig cfg = base;
      std::ostringstream name;
      name << base.run_name << "-f" << fmt_double(f) << "-s" << s;
      cfg.run_name = name.str();
      cfg.gap.swap = SwapInterval::epoch_fraction(f);
      cfg.gap.seed = s;
      try {
        const fs::path dir = cmd_train(cfg, sweep_dir, sched);
        const CurveStats st =
            curve_stats_from_eval_log(dir, base.eval.spread_tail);
        sum_std += st.mean_val_std;
        sum_spread += st.mean_spread;
        ++ok;
        run_names.push_back(cfg.run_name);
      } catch (const std::exception& e) {
        ++failed;
        ++outcome.failed_runs;
        run_names.push_back(json{{"failed", cfg.run_name}, {"error", e.what()}});
      }
    }
    const double mean_std = ok > 0 ? sum_std / ok : 0.0;
    const double mean_spread = ok > 0 ? sum_spread / ok : 0.0;
    csv << fmt_double(f) << ',' << ok << ',' << failed << ','
        << fmt_double(mean_std) << ',' << fmt_double(mean_spread) << '\n';
    rows.push_back({{"frequency", f},
                    {"n_runs", ok},
                    {"n_failed", failed},
                    {"mean_val_cost_std", mean_std},
                    {"mean_curve_spread", mean_spread},
                    {"runs", run_names}});
  }
  write_text(sweep_dir / "aggregate.csv", csv.str());
  outcome.summary = {{"sweep_dir", sweep_dir.generic_string()},
                     {"spread_tail", base.eval.spread_tail},
                     {"frequencies", rows}};
  write_json(sweep_dir / "aggregate.json", outcome.summary);
  return outcome;
}

// ---- report ----------------------------------------------------------------

nlohmann::json cmd_report(const fs::path& run_dir,
                          const std::vector<fs::path>& pool_dirs,
                          const EvalSpec& eval, std::uint64_t seed) {
  const json coverage = cmd_coverage(run_dir, eval);
  const CurveStats stats = curve_stats_from_eval_log(run_dir, eval.spread_tail);

  // plot-ready learning curves, one row per (tick, worker)
  {
    RunPaths rp{run_dir};
    std::ofstream f(rp.reports() / "curves.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write curves.csv");
    f << "update,worker,train_cost,val_cost\n";
    f.precision(17);
    for (const auto& row : read_jsonl(rp.eval()))
      f << row.at("update").get<std::uint64_t>() << ','
        << row.at("worker").get<int>() << ','
        << row.at("train_cost").get<double>() << ','
        << row.at("val_cost").get<double>() << '\n';
  }

  json gam2 = nullptr;
  if (!pool_dirs.empty()) {
    std::vector<fs::path> all{run_dir};
    all.insert(all.end(), pool_dirs.begin(), pool_dirs.end());
    gam2 = cmd_eval(all, eval, seed, RunPaths{run_dir}.reports());
  }

  json summary = {{"run", coverage.at("run")},
                  {"gam2", gam2},
                  {"coverage", coverage},
                  {"kl_score", coverage.at("pooled").at("kl_score")},
                  {"spread", stats.mean_spread},
                  {"val_cost_std", stats.mean_val_std},
                  {"verdict", gam2.is_null() ? json(nullptr)
                                             : gam2.at("verdict")}};
  write_json(RunPaths{run_dir}.reports() / "summary.json", summary);
  return summary;
}

}  // namespace gapforge
