#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cmc/core.hpp"
#include "cmc/random.hpp"

namespace cmc {

/// Radial velocity of a star with N_P planets:
/// y_j = V + sum_i K_i [cos(2 pi t_j / P_i + w_i) + e_i cos(w_i)] + xi_j, xi_j ~ N(0, noise_sd^2).
/// Parameters are packed x = [V, K_1, P_1, e_1, w_1, K_2, ...] (d = 1 + 4 N_P)
/// with independent uniform priors.
class RadialVelocityModel {
 public:
  struct Bounds {
    double lo;
    double hi;
  };

  RadialVelocityModel(std::size_t planets, std::vector<double> times, std::vector<double> observations,
                      double noise_sd = 1.0);

  std::size_t planets() const noexcept { return planets_; }
  std::size_t dim() const noexcept { return 1 + 4 * planets_; }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& observations() const noexcept { return observations_; }

  /// Prior box per coordinate: V in [-20, 20], K in [0, 20], P in (0, 365],
  /// e in [0, 1], w in [-pi, pi].
  std::vector<Bounds> prior_bounds() const;

  double log_prior(const VectorRef& x) const;
  double log_likelihood(const VectorRef& x) const;
  /// log prior + log likelihood; the evidence of this target is Z for N_P.
  double log_target(const VectorRef& x) const;
  Vector sample_prior(Rng& rng) const;

  /// Noise-free velocity curve at the model's times.
  static std::vector<double> velocity(const VectorRef& x, std::size_t planets, const std::vector<double>& times);
  /// Observations from the curve plus unit noise.
  static std::vector<double> simulate(const VectorRef& x, std::size_t planets, const std::vector<double>& times,
                                      double noise_sd, Rng& rng);

 private:
  std::size_t planets_;
  std::vector<double> times_;
  std::vector<double> observations_;
  double noise_sd_;
};

/// Range-based localization: y_j = 20 log(||x - h_j||) + B_j, B_j ~ N(0, lambda_j^2),
/// with a uniform prior on a square box.
class SensorNetworkTarget {
 public:
  SensorNetworkTarget(Matrix sensors, std::vector<double> noise_sd, Vector observations, double box_half_width);

  /// Three sensors at [3,-8], [10,0], [0,10], lambda_j = 6, prior [-30, 30]^2,
  /// one measurement per sensor simulated from `truth`.
  static SensorNetworkTarget standard(const Vector& truth, std::uint64_t seed);

  double log_target(const VectorRef& x) const;
  const Vector& observations() const noexcept { return observations_; }
  double box_half_width() const noexcept { return half_width_; }

 private:
  Matrix sensors_;
  std::vector<double> noise_sd_;
  Vector observations_;
  double half_width_;
};

}  // namespace cmc
