#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cmc/compress.hpp"
#include "cmc/core.hpp"

namespace cmc {

/// What one node sends to the central node: its (possibly compressed)
/// approximation, aggregated weight W, sample count N and, for weighted
/// sources, Zhat.
struct LocalReport {
  std::variant<WeightedSampleSet, CompressedSet> approximation;
  double aggregated_weight = 0.0;
  std::size_t sample_count = 0;
  std::optional<double> marginal_likelihood;
  std::string node_id;

  /// W = sum w_n (or N), Zhat from the weights when present.
  static LocalReport from_samples(WeightedSampleSet s, std::string node_id);
  /// W from the compressed set, Zhat = W / N for weighted sources.
  static LocalReport from_compressed(CompressedSet c, std::size_t n, std::string node_id);

  bool weighted() const;
  std::size_t dim() const;
};

/// Pools every report's particles; node l's particles are scaled by
/// rho_l = W_l / sum_j W_j. Throws NumericalError("degenerate pool") when
/// every W_l is zero.
CompressedSet fuse_parallel(std::span<const LocalReport> reports);

/// rho_l = N_l Zhat_l / sum_k N_k Zhat_k.
std::vector<double> model_posterior(std::span<const LocalReport> reports);

/// Same pmf from log Zhat values, computed with a max shift.
std::vector<double> model_posterior_from_log(std::span<const double> log_z, std::span<const std::size_t> counts);

struct ProductMixture {
  CompressedSet mixture;
  /// log of the integral of the product of the (normalized) report mixtures.
  double log_mass = 0.0;
  /// Components dropped because their precision sum was not positive definite.
  std::size_t rejected = 0;
};

/// Exact product of the L Gaussian mixtures carried by the reports: one
/// component per tuple (m_1..m_L) with precision sum_l Lambda_l, mean
/// Lambda^-1 sum_l Lambda_l mu_l and weight prod a_hat_{m_l} times the
/// product's scale constant. Throws std::invalid_argument("enumeration too
/// large") when prod M_l exceeds `cap`.
ProductMixture fuse_product_of_mixtures(std::span<const LocalReport> reports, std::size_t cap = 1'000'000);

/// Transmission size of a report: payload_scalars of its approximation (a
/// sample set counts as N plain particles), plus one for W when weighted.
std::size_t payload_scalars(const LocalReport& report);

/// Wire format: the compressed-set JSON plus node_id, N, W and Zhat.
std::string report_to_json(const LocalReport& report);
LocalReport report_from_json(const std::string& text);

}  // namespace cmc
