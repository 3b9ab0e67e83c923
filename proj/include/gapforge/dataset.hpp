#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gapforge/matrix.hpp"
#include "gapforge/rng.hpp"

namespace gapforge {

struct Mode {
  std::array<double, 2> center{0.0, 0.0};
  double scale = 0.0;
};

struct Dataset {
  Matrix points;            // n x 2
  std::vector<int> labels;  // per-point mode index; empty when absent
  std::vector<Mode> modes;  // ground-truth components; empty when unknown
  std::string name;

  std::size_t size() const { return points.rows(); }
};

// Linear decay from sigma0 to zero, reaching zero at
// decay_until_fraction * total updates.
struct NoiseSchedule {
  double sigma0 = 0.1;
  double decay_until_fraction = 0.5;
};

double noise_sigma(const NoiseSchedule& s, std::uint64_t t, std::uint64_t total);

// 25 isotropic Gaussians centered on a 5x5 grid over [-4,4]^2, points
// spread over components as evenly as possible (counts differ by <= 1).
Dataset make_mog(std::size_t n, double component_std, SplittableRng& rng);

// Plain-text "x y label" points, whitespace separated, '#' comments,
// 1-based labels. Mode centers are per-label means; the scale is the
// isotropy-assuming radial std sqrt(E|x - mu|^2 / 2).
Dataset load_r15(const std::filesystem::path& path);

// Non-canonical stand-in with the same gross statistics as the 15-cluster
// benchmark (8 clusters on an outer ring, 6 on an inner ring, 1 central).
Dataset make_r15_like(std::size_t n, double cluster_std, SplittableRng& rng);

Dataset subsample(const Dataset& d, std::size_t n, SplittableRng& rng);

// Per-axis affine map recorded by normalize_to_unit.
struct UnitTransform {
  std::array<double, 2> min{0.0, 0.0};
  std::array<double, 2> span{1.0, 1.0};

  std::array<double, 2> apply(const std::array<double, 2>& p) const {
    return {(p[0] - min[0]) / span[0], (p[1] - min[1]) / span[1]};
  }
  std::array<double, 2> invert(const std::array<double, 2>& p) const {
    return {p[0] * span[0] + min[0], p[1] * span[1] + min[1]};
  }
};

// Maps each axis to [0,1]; mode centers follow the points and scales are
// divided by the mean axis span.
std::pair<Dataset, UnitTransform> normalize_to_unit(const Dataset& d);

struct TrainValSplit {
  std::shared_ptr<const Matrix> train;
  Matrix val;
};

// Seeded random partition; val_fraction in (0,1).
TrainValSplit split_train_val(const Dataset& d, double val_fraction,
                              SplittableRng& rng);

// One fresh permutation of the training points per epoch; the short final
// batch is dropped.
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const Matrix> train, std::size_t batch,
              SplittableRng rng);

  Matrix next();
  std::size_t batches_per_epoch() const { return train_->rows() / batch_; }

 private:
  void reshuffle();

  std::shared_ptr<const Matrix> train_;
  std::size_t batch_;
  SplittableRng rng_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
};

// CSV export, "x,y,label" (label -1 when absent).
void export_csv(const Dataset& d, const std::filesystem::path& path);

}  // namespace gapforge
