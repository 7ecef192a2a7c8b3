#include "cmc/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "cmc/error.hpp"
#include "cmc/random.hpp"

namespace cmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix cholesky_factor(const Matrix& cov, const char* what) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) throw std::invalid_argument(what);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument(what);
  return llt.matrixL();
}

Vector gaussian_step(const Matrix& chol, Rng& rng) {
  Vector z(chol.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return chol * z;
}

double log_sum_exp(std::span<const double> v) {
  double top = kNegInf;
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc);
}

}  // namespace

double LogWeightedSamples::max_log_weight() const {
  double top = kNegInf;
  for (double x : log_weights) top = std::max(top, x);
  return top;
}

double LogWeightedSamples::log_marginal_likelihood() const {
  return log_sum_exp(log_weights) - std::log(static_cast<double>(log_weights.size()));
}

WeightedSampleSet LogWeightedSamples::to_sample_set(double log_shift) const {
  std::vector<double> w;
  w.reserve(log_weights.size());
  for (double lw : log_weights) w.push_back(std::exp(lw - log_shift));
  return WeightedSampleSet::weighted(points, std::move(w));
}

ChainResult mh_random_walk(const LogDensity& log_target, const ChainConfig& cfg) {
  if (cfg.length < 1) throw std::invalid_argument("chain length must be at least 1");
  const auto d = cfg.initial.size();
  if (d < 1 || cfg.proposal_cov.rows() != d) throw std::invalid_argument("proposal covariance does not match the state");
  const Matrix chol = cholesky_factor(cfg.proposal_cov, "proposal covariance must be positive definite");
  Rng rng(cfg.seed);
  ChainResult out;
  out.states.resize(d, static_cast<Eigen::Index>(cfg.length));
  Vector x = cfg.initial;
  double lp = log_target(x);
  out.target_evals = 1;
  if (!std::isfinite(lp)) throw std::invalid_argument("log target not finite at the initial state");
  out.states.col(0) = x;
  std::size_t accepted = 0;
  for (std::size_t t = 1; t < cfg.length; ++t) {
    const Vector prop = x + gaussian_step(chol, rng);
    const double lp_prop = log_target(prop);
    ++out.target_evals;
    const double log_u = std::log(rng.uniform_open());
    if (!std::isnan(lp_prop) && lp_prop > kNegInf && log_u < cfg.tempering * (lp_prop - lp)) {
      x = prop;
      lp = lp_prop;
      ++accepted;
    }
    out.states.col(static_cast<Eigen::Index>(t)) = x;
  }
  out.acceptance_rate = cfg.length > 1 ? static_cast<double>(accepted) / static_cast<double>(cfg.length - 1) : 0.0;
  return out;
}

LogWeightedSamples pmc(const LogDensity& log_target, const PmcConfig& cfg) {
  if (cfg.samples_per_iter < 1 || cfg.iterations < 1) throw std::invalid_argument("PMC needs N >= 1 and at least one iteration");
  if (cfg.initial_means.cols() < 1) throw std::invalid_argument("PMC needs initial proposal locations");
  if (!(cfg.proposal_sd > 0.0)) throw std::invalid_argument("PMC proposal scale must be positive");
  const auto d = cfg.initial_means.rows();
  const auto n = static_cast<Eigen::Index>(cfg.samples_per_iter);
  Rng rng(cfg.seed);
  Matrix means(d, n);
  for (Eigen::Index i = 0; i < n; ++i) means.col(i) = cfg.initial_means.col(i % cfg.initial_means.cols());
  const double log_q_norm =
      -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - static_cast<double>(d) * std::log(cfg.proposal_sd);
  LogWeightedSamples out;
  out.points.resize(d, n);
  out.log_weights.assign(cfg.samples_per_iter, kNegInf);
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector z(d);
      for (Eigen::Index k = 0; k < d; ++k) z[k] = rng.normal();
      out.points.col(i) = means.col(i) + cfg.proposal_sd * z;
      const double lp = log_target(out.points.col(i));
      out.log_weights[static_cast<std::size_t>(i)] = std::isnan(lp) ? kNegInf : lp - (log_q_norm - 0.5 * z.squaredNorm());
    }
    const double top = out.max_log_weight();
    if (!std::isfinite(top)) throw NumericalError("weight degeneracy");
    std::vector<double> w;
    w.reserve(out.log_weights.size());
    for (double lw : out.log_weights) w.push_back(std::exp(lw - top));
    if (iter + 1 == cfg.iterations) break;
    const auto idx = multinomial_resample(w, cfg.samples_per_iter, rng);
    for (Eigen::Index i = 0; i < n; ++i) means.col(i) = out.points.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
  }
  return out;
}

std::vector<double> lais_log_weights(const Matrix& samples, const Matrix& means, const Matrix& cov,
                                     const LogDensity& log_target) {
  if (samples.cols() != means.cols() || samples.rows() != means.rows()) {
    throw std::invalid_argument("one sample per mean required");
  }
  const Matrix chol = cholesky_factor(cov, "proposal covariance must be positive definite");
  const auto d = static_cast<double>(samples.rows());
  const double log_norm =
      -0.5 * d * std::log(2.0 * std::numbers::pi) - chol.diagonal().array().log().sum();
  const auto t_count = static_cast<std::size_t>(means.cols());
  std::vector<double> out(t_count);
  std::vector<double> terms(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t k = 0; k < t_count; ++k) {
      const Vector z = chol.triangularView<Eigen::Lower>().solve(samples.col(static_cast<Eigen::Index>(t)) -
                                                                 means.col(static_cast<Eigen::Index>(k)));
      terms[k] = log_norm - 0.5 * z.squaredNorm();
    }
    const double log_den = log_sum_exp(terms) - std::log(static_cast<double>(t_count));
    if (!std::isfinite(log_den)) throw NumericalError("zero temporal-mixture density");
    const double lp = log_target(samples.col(static_cast<Eigen::Index>(t)));
    out[t] = std::isnan(lp) ? kNegInf : lp - log_den;
  }
  return out;
}

ClaisResult clais(const LogDensity& log_target, const ClaisConfig& cfg) {
  const std::size_t t_count = cfg.chain.length;
  if (cfg.regions < 1 || cfg.regions > t_count) throw std::invalid_argument("CLAIS needs 1 <= M <= T");
  const ChainResult chain = mh_random_walk(log_target, cfg.chain);
  const Matrix chol = cholesky_factor(cfg.chain.proposal_cov, "proposal covariance must be positive definite");
  Rng rng(derive_seed(cfg.chain.seed, 1));
  ClaisResult out;
  out.means = chain.states;
  out.acceptance_rate = chain.acceptance_rate;
  Matrix draws(out.means.rows(), out.means.cols());
  for (Eigen::Index t = 0; t < draws.cols(); ++t) draws.col(t) = out.means.col(t) + gaussian_step(chol, rng);

  const bool use_means = cfg.compress_set == ClaisCompressionSet::means;
  const auto source = WeightedSampleSet::unweighted(use_means ? out.means : draws);
  const Partition p = build_partition(source, cfg.partition, cfg.regions, derive_seed(cfg.chain.seed, 2));
  CompressedSet kde = kde_compress(source, assign(p, source), KernelKind::full, cfg.delta);
  if (use_means) {
    std::vector<Matrix> covs = kde.covariances();
    for (auto& c : covs) c += cfg.chain.proposal_cov;
    kde = CompressedSet(kde.particles(), std::vector<double>(kde.weights().begin(), kde.weights().end()),
                        kde.aggregated_weight(), kde.mode(), std::nullopt, std::move(covs), KernelKind::full);
  }
  const KernelMixture mixture(kde);
  out.mixture_components = mixture.size();

  out.samples.points = draws;
  out.samples.log_weights.resize(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto x = draws.col(static_cast<Eigen::Index>(t));
    const double lp = log_target(x);
    ++out.target_evals;
    const double lq = mixture.log_pdf(x);
    out.kernel_evals += mixture.size();
    if (!std::isfinite(lq)) {
      ++out.underflows;
      out.samples.log_weights[t] = kNegInf;
      continue;
    }
    out.samples.log_weights[t] = std::isnan(lp) ? kNegInf : lp - lq;
  }
  out.log_Z = out.samples.log_marginal_likelihood();
  return out;
}

}  // namespace cmc
