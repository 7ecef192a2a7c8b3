#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmc/compress.hpp"
#include "cmc/core.hpp"
#include "cmc/partition.hpp"
#include "cmc/random.hpp"

namespace cmc {

/// (i_full - i_compressed)^2.
double loss_single(double i_full, double i_compressed);

/// L_R = sum_r xi_r^2 (Ihat(h_r) - Itilde(h_r))^2. An h-specific compressed set
/// is only accepted with a single-function family (it must be the same h).
double loss_family(const WeightedSampleSet& s, const CompressedSet& c, const MomentFamily& fam);

/// xi_r^2 = 1 / Ihat(h_r)^2. Throws NumericalError when some |Ihat(h_r)| is
/// below `min_abs_estimate`; the weights explode as an estimate nears zero.
std::vector<double> relative_loss_weights(const WeightedSampleSet& s, const MomentFamily& fam,
                                          double min_abs_estimate = 1e-8);

struct RegionCosts {
  std::vector<double> costs;
  CostMode mode = CostMode::deterministic;
  double total = 0.0;
};

/// c_m = sum_{J_m} wbar_j [h(x_j) - h(s_m)] with s_m the within-region mean;
/// total = (sum_m c_m)^2.
RegionCosts region_costs_deterministic(const WeightedSampleSet& s, const Assignment& a, const Integrand& h);

/// c_m = a_hat_m sum_{J_m} wbar_j h(x_j)^2 - (sum_{J_m} wbar_j h(x_j))^2, evaluated
/// in the centred form a_hat_m sum wbar_j (h(x_j) - mu_m)^2; total = sum_m c_m.
RegionCosts region_costs_stochastic(const WeightedSampleSet& s, const Assignment& a, const Integrand& h);

/// "region_index,cost" rows.
std::string region_costs_to_csv(const RegionCosts& c);

/// True per-stratum quantities of a 1-D density: masses a_bar_m, means I_m and
/// variances sigma_m^2 of h, and the per-stratum sample counts K_m.
struct StratifiedOracle {
  std::vector<double> region_masses;
  std::vector<double> region_means;
  std::vector<double> region_variances;
  std::vector<std::size_t> samples_per_region;
};

using ScalarFunction = std::function<double(double)>;

/// Integrates pdf, h*pdf and (h - I_m)^2 * pdf over each interval
/// [edges[m], edges[m+1]] with adaptive Gauss-Kronrod quadrature. Edges may be
/// +-infinity. Throws NumericalError("integration failure") when a stratum has
/// no mass or a computed variance is negative beyond tolerance.
StratifiedOracle make_stratified_oracle(const ScalarFunction& pdf, const ScalarFunction& h,
                                        std::span<const double> edges, std::span<const std::size_t> samples_per_region,
                                        double tolerance = 1e-12);

/// Draws one sample from the density restricted to a stratum.
using StratumSampler = std::function<double(Rng&)>;

/// I_V = sum_m a_bar_m (1/K_m) sum_i h(s_{m,i}); stratum m uses the sub-stream
/// derive_seed(seed, m).
double stratified_estimate(const StratifiedOracle& oracle, std::span<const StratumSampler> samplers,
                           const ScalarFunction& h, std::uint64_t seed);

/// sum_m a_bar_m^2 sigma_m^2 / K_m.
double stratified_variance(const StratifiedOracle& oracle);

struct VarianceDecomposition {
  double within = 0.0;
  double between = 0.0;
};

/// within = sum a_bar_m sigma_m^2, between = sum a_bar_m (I_m - I)^2.
/// Throws NumericalError("integration failure") for a negative variance or a
/// within term exceeding `total_variance` beyond `tolerance`.
VarianceDecomposition variance_decomposition(const StratifiedOracle& oracle, double total_variance,
                                             double tolerance = 1e-6);

}  // namespace cmc
