#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace gapforge {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

// Counter-based splittable PRNG.
//
// Every draw is a pure function of (seed, stream_id, counter):
//
//   key    = mix64(mix64(seed + GAMMA) ^ mix64(stream_id + LEAF))
//   u64(i) = mix64(key + i * GAMMA)          i = 1, 2, ...
//
// which is the SplitMix64 sequence with initial state `key`. Distinct
// stream ids give independent sequences, draws are addressable by index,
// and the bit stream is identical on every platform. split(tag) derives a
// child stream whose id depends only on (stream_id, tag), so adding or
// removing sibling streams never perturbs existing ones.
class SplittableRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;
  static constexpr std::uint64_t kLeaf = 0x632be59bd9b4e019ull;

  SplittableRng() : SplittableRng(0, 0) {}
  SplittableRng(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_(stream_id),
        key_(mix64(mix64(seed + kGamma) ^ mix64(stream_id + kLeaf))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t draws() const { return counter_; }

  SplittableRng split(std::uint64_t tag) const {
    return SplittableRng(seed_, mix64(stream_ ^ mix64(tag + kLeaf)));
  }

  std::uint64_t next_u64() { return mix64(key_ + ++counter_ * kGamma); }

  // Strictly inside (0, 1); never returns an endpoint.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // One standard-normal variate via Box-Muller; consumes a full pair of
  // uniforms and discards the sine branch, keeping the stream stateless.
  double normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  void fill_uniform(std::span<double> out, double lo, double hi) {
    for (double& v : out) v = uniform(lo, hi);
  }

  void fill_normal(std::span<double> out, double mean, double stddev) {
    std::size_t i = 0;
    while (i + 1 < out.size()) {
      const double u1 = next_unit();
      const double u2 = next_unit();
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 2.0 * std::numbers::pi * u2;
      out[i++] = mean + stddev * r * std::cos(a);
      out[i++] = mean + stddev * r * std::sin(a);
    }
    if (i < out.size()) out[i] = mean + stddev * normal();
  }

  // Uniform integer in [0, n). Rejection-free modulo would bias large n;
  // n here is always tiny (worker counts, batch indices), so rejection
  // sampling terminates almost immediately.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gapforge
