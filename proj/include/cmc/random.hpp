#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cmc {

/// SplitMix64 finalizer. Used to derive independent sub-stream seeds from a
/// base seed and a stream index (run index, region index, node id).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded random source shared by every stochastic routine in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) built from the top 53 bits of one engine draw.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe to pass to log().
  double uniform_open() {
    double u = 0.0;
    while (u == 0.0) u = uniform();
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return normal_(engine_); }

  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Index of the first cumulative weight strictly above u * total.
/// `cumulative` must be nondecreasing with a positive last entry.
std::size_t inverse_cdf_pick(std::span<const double> cumulative, double u);

/// Running sums of `weights`.
std::vector<double> cumulative_sum(std::span<const double> weights);

/// n independent categorical draws from (unnormalized) weights, inverse-CDF.
std::vector<std::size_t> multinomial_resample(std::span<const double> weights, std::size_t n, Rng& rng);

/// Systematic resampling: one uniform offset, n evenly spaced pointers.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, std::size_t n, Rng& rng);

}  // namespace cmc
