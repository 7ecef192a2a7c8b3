#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cmc/compress.hpp"
#include "cmc/core.hpp"
#include "cmc/partition.hpp"

namespace cmc {

/// log pi(x) up to a constant; -infinity outside the support.
using LogDensity = std::function<double(const VectorRef&)>;

/// Points with log-domain importance weights. Converting to a sample set
/// exp-shifts by a caller-chosen constant so several nodes can share a scale.
struct LogWeightedSamples {
  Matrix points;
  std::vector<double> log_weights;

  double max_log_weight() const;
  /// log((1/N) sum_n exp(log_w_n)).
  double log_marginal_likelihood() const;
  /// Weights exp(log_w - log_shift); pass max_log_weight() for a single set.
  WeightedSampleSet to_sample_set(double log_shift) const;
};

struct ChainConfig {
  std::size_t length = 1;
  Matrix proposal_cov;
  Vector initial;
  std::uint64_t seed = 0;
  /// The chain targets pi^tempering.
  double tempering = 1.0;
};

struct ChainResult {
  /// d x T; the first column is the initial state.
  Matrix states;
  double acceptance_rate = 0.0;
  std::size_t target_evals = 0;
};

/// Random-walk Metropolis with Gaussian increments N(0, C).
ChainResult mh_random_walk(const LogDensity& log_target, const ChainConfig& cfg);

struct PmcConfig {
  std::size_t samples_per_iter = 100;
  std::size_t iterations = 20;
  /// Initial proposal locations (d x K); assigned round-robin to the N proposals.
  Matrix initial_means;
  double proposal_sd = 2.0;
  std::uint64_t seed = 0;
};

/// Population Monte Carlo: each iteration draws x_n ~ N(mu_n, sd^2 I), weights
/// w_n = pi(x_n) / q_n(x_n), then relocates the mu_n by multinomial
/// resampling. Returns the last iteration's weighted samples. Throws
/// NumericalError("weight degeneracy") when every weight is zero.
LogWeightedSamples pmc(const LogDensity& log_target, const PmcConfig& cfg);

/// log w_t = log pi(x_t) - log[(1/T) sum_k N(x_t; mu_k, C)]; O(T^2) kernel evaluations.
std::vector<double> lais_log_weights(const Matrix& samples, const Matrix& means, const Matrix& cov,
                                     const LogDensity& log_target);

enum class ClaisCompressionSet { means, samples };

struct ClaisConfig {
  ChainConfig chain;
  std::size_t regions = 10;
  double delta = 0.1;
  PartitionStrategy partition = PartitionStrategy::uniform_grid;
  ClaisCompressionSet compress_set = ClaisCompressionSet::means;
};

struct ClaisResult {
  LogWeightedSamples samples;
  Matrix means;
  double log_Z = 0.0;
  double acceptance_rate = 0.0;
  std::size_t mixture_components = 0;
  /// Target evaluations in the weighting step (T) and mixture kernel evaluations (T M').
  std::size_t target_evals = 0;
  std::size_t kernel_evals = 0;
  /// Samples whose mixture density underflowed to zero; their weight is zero.
  std::size_t underflows = 0;
};

/// Compressed LAIS: MH chain of means, one draw x_t ~ N(mu_t, C) per mean, an
/// M-component kernel mixture built by C-MC, and weights pi(x_t) / mixture(x_t).
/// Compressing the means uses kernel covariance (within-region scatter + C +
/// delta I), so each kernel approximates the proposals it replaces;
/// compressing the samples uses (scatter + delta I).
ClaisResult clais(const LogDensity& log_target, const ClaisConfig& cfg);

}  // namespace cmc
