#include "gapforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "gapforge/errors.hpp"

namespace gapforge {

double noise_sigma(const NoiseSchedule& s, std::uint64_t t,
                   std::uint64_t total) {
  const double horizon =
      s.decay_until_fraction * static_cast<double>(total);
  if (horizon <= 0.0) return 0.0;
  const double f = 1.0 - static_cast<double>(t) / horizon;
  return s.sigma0 * std::max(0.0, f);
}

Dataset make_mog(std::size_t n, double component_std, SplittableRng& rng) {
  if (component_std <= 0.0)
    throw std::invalid_argument("make_mog: component_std must be positive");
  if (n < 25) throw std::invalid_argument("make_mog: need n >= 25");

  Dataset d;
  d.name = "mog-5x5";
  d.modes.reserve(25);
  for (int gy = 0; gy < 5; ++gy)
    for (int gx = 0; gx < 5; ++gx)
      d.modes.push_back(Mode{{-4.0 + 2.0 * gx, -4.0 + 2.0 * gy}, component_std});

  d.points = Matrix(n, 2);
  d.labels.resize(n);
  // n mod 25 components get one extra point
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 25);
    d.labels[i] = label;
    d.points(i, 0) = d.modes[label].center[0] + component_std * rng.normal();
    d.points(i, 1) = d.modes[label].center[1] + component_std * rng.normal();
  }
  return d;
}

namespace {

void finalize_labeled(Dataset& d, std::size_t n_modes) {
  d.modes.assign(n_modes, Mode{});
  std::vector<std::size_t> counts(n_modes, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int l = d.labels[i];
    d.modes[l].center[0] += d.points(i, 0);
    d.modes[l].center[1] += d.points(i, 1);
    ++counts[l];
  }
  for (std::size_t m = 0; m < n_modes; ++m) {
    if (counts[m] == 0) continue;
    d.modes[m].center[0] /= static_cast<double>(counts[m]);
    d.modes[m].center[1] /= static_cast<double>(counts[m]);
  }
  std::vector<double> sq(n_modes, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& c = d.modes[d.labels[i]].center;
    const double dx = d.points(i, 0) - c[0];
    const double dy = d.points(i, 1) - c[1];
    sq[d.labels[i]] += dx * dx + dy * dy;
  }
  for (std::size_t m = 0; m < n_modes; ++m) {
    // radial std of an isotropic 2-D Gaussian: E|x-mu|^2 = 2 sigma^2
    d.modes[m].scale =
        counts[m] > 0 ? std::sqrt(sq[m] / (2.0 * static_cast<double>(counts[m])))
                      : 0.0;
  }
}

}  // namespace

Dataset load_r15(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("r15: cannot open " + path.string());

  Dataset d;
  d.name = "r15";
  std::vector<std::array<double, 3>> rows;
  std::string line;
  std::size_t line_no = 0;
  int max_label = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double x, y;
    int label;
    if (!(ss >> x)) continue;  // blank or comment-only line
    if (!(ss >> y >> label))
      throw IoError("r15: parse error at line " + std::to_string(line_no));
    std::string extra;
    if (ss >> extra)
      throw IoError("r15: trailing tokens at line " + std::to_string(line_no));
    if (label < 1)
      throw IoError("r15: label out of range at line " + std::to_string(line_no));
    max_label = std::max(max_label, label);
    rows.push_back({x, y, static_cast<double>(label)});
  }
  if (rows.empty()) throw IoError("r15: no data points in " + path.string());

  d.points = Matrix(rows.size(), 2);
  d.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.points(i, 0) = rows[i][0];
    d.points(i, 1) = rows[i][1];
    d.labels[i] = static_cast<int>(rows[i][2]) - 1;  // 1-based in file
  }
  finalize_labeled(d, static_cast<std::size_t>(max_label));
  if (rows.size() != 500 && rows.size() != 600)
    std::cerr << "warning: r15 file has " << rows.size()
              << " points (expected 500 or 600)\n";
  return d;
}

Dataset make_r15_like(std::size_t n, double cluster_std, SplittableRng& rng) {
  if (cluster_std <= 0.0)
    throw std::invalid_argument("make_r15_like: cluster_std must be positive");
  if (n < 15) throw std::invalid_argument("make_r15_like: need n >= 15");

  Dataset d;
  d.name = "r15-synthetic";
  std::vector<std::array<double, 2>> centers;
  centers.push_back({0.0, 0.0});
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 6.0;
    centers.push_back({4.0 * std::cos(a), 4.0 * std::sin(a)});
  }
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * std::numbers::pi * (i + 0.5) / 8.0;
    centers.push_back({8.0 * std::cos(a), 8.0 * std::sin(a)});
  }

  d.points = Matrix(n, 2);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 15);
    d.labels[i] = label;
    d.points(i, 0) = centers[label][0] + cluster_std * rng.normal();
    d.points(i, 1) = centers[label][1] + cluster_std * rng.normal();
  }
  finalize_labeled(d, 15);
  return d;
}

Dataset subsample(const Dataset& d, std::size_t n, SplittableRng& rng) {
  if (n > d.size())
    throw std::invalid_argument("subsample: n exceeds dataset size");
  std::vector<std::uint32_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = static_cast<std::uint32_t>(i);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  Dataset out;
  out.name = d.name + "-sub" + std::to_string(n);
  out.modes = d.modes;
  out.points = Matrix(n, 2);
  if (!d.labels.empty()) out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.points(i, 0) = d.points(idx[i], 0);
    out.points(i, 1) = d.points(idx[i], 1);
    if (!d.labels.empty()) out.labels[i] = d.labels[idx[i]];
  }
  return out;
}

std::pair<Dataset, UnitTransform> normalize_to_unit(const Dataset& d) {
  if (d.size() < 2)
    throw std::invalid_argument("normalize_to_unit: need at least 2 points");
  UnitTransform t;
  std::array<double, 2> mx{d.points(0, 0), d.points(0, 1)};
  t.min = mx;
  for (std::size_t i = 1; i < d.size(); ++i) {
    for (int a = 0; a < 2; ++a) {
      t.min[a] = std::min(t.min[a], d.points(i, a));
      mx[a] = std::max(mx[a], d.points(i, a));
    }
  }
  for (int a = 0; a < 2; ++a) {
    t.span[a] = mx[a] - t.min[a];
    if (t.span[a] <= 0.0)
      throw std::invalid_argument("normalize_to_unit: zero extent on an axis");
  }

  Dataset out = d;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto p = t.apply({d.points(i, 0), d.points(i, 1)});
    out.points(i, 0) = p[0];
    out.points(i, 1) = p[1];
  }
  const double mean_span = 0.5 * (t.span[0] + t.span[1]);
  for (auto& m : out.modes) {
    m.center = t.apply(m.center);
    m.scale /= mean_span;
  }
  return {std::move(out), t};
}

TrainValSplit split_train_val(const Dataset& d, double val_fraction,
                              SplittableRng& rng) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("split_train_val: val_fraction must be in (0,1)");
  const std::size_t n = d.size();
  const std::size_t n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n)
    throw std::invalid_argument("split_train_val: degenerate split");

  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = rng.below(i + 1);
    std::swap(idx[i], idx[j]);
  }

  TrainValSplit s;
  auto train = std::make_shared<Matrix>(n - n_val, 2);
  s.val = Matrix(n_val, 2);
  for (std::size_t i = 0; i < n - n_val; ++i) {
    (*train)(i, 0) = d.points(idx[i], 0);
    (*train)(i, 1) = d.points(idx[i], 1);
  }
  for (std::size_t i = 0; i < n_val; ++i) {
    s.val(i, 0) = d.points(idx[n - n_val + i], 0);
    s.val(i, 1) = d.points(idx[n - n_val + i], 1);
  }
  s.train = std::move(train);
  return s;
}

BatchStream::BatchStream(std::shared_ptr<const Matrix> train, std::size_t batch,
                         SplittableRng rng)
    : train_(std::move(train)), batch_(batch), rng_(rng) {
  if (batch_ == 0 || batch_ > train_->rows())
    throw std::invalid_argument("BatchStream: batch larger than train set");
  order_.resize(train_->rows());
  reshuffle();
}

void BatchStream::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i)
    order_[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = order_.size(); i-- > 1;) {
    const std::size_t j = rng_.below(i + 1);
    std::swap(order_[i], order_[j]);
  }
  cursor_ = 0;
}

Matrix BatchStream::next() {
  if (cursor_ + batch_ > order_.size()) reshuffle();  // drops the remainder
  Matrix b(batch_, 2);
  for (std::size_t i = 0; i < batch_; ++i) {
    const std::size_t src = order_[cursor_ + i];
    b(i, 0) = (*train_)(src, 0);
    b(i, 1) = (*train_)(src, 1);
  }
  cursor_ += batch_;
  return b;
}

void export_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "x,y,label\n";
  f.precision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int label = d.labels.empty() ? -1 : d.labels[i];
    f << d.points(i, 0) << ',' << d.points(i, 1) << ',' << label << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace gapforge
