#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cmc/core.hpp"
#include "cmc/partition.hpp"
#include "cmc/random.hpp"

namespace cmc {

enum class CompressionMode { stochastic, deterministic, h_specific, ls, bootstrap, raw };
enum class KernelKind { none, full, shared_diagonal };

std::string to_string(CompressionMode mode);
std::string to_string(KernelKind kind);

/// M summary particles s_m with weights a_hat_m, the aggregated weight W and,
/// for kernel approximations, one covariance per particle.
///
/// h-specific sets hold scalar particles (a 1 x M matrix of h estimates).
class CompressedSet {
 public:
  CompressedSet(Matrix particles, std::vector<double> weights, double aggregated_weight, CompressionMode mode,
                std::optional<std::vector<double>> unnorm_weights = std::nullopt,
                std::vector<Matrix> covariances = {}, KernelKind kernel = KernelKind::none);

  std::size_t size() const noexcept { return static_cast<std::size_t>(particles_.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(particles_.rows()); }

  const Matrix& particles() const noexcept { return particles_; }
  auto particle(std::size_t m) const { return particles_.col(static_cast<Eigen::Index>(m)); }
  std::span<const double> weights() const noexcept { return weights_; }
  double weight(std::size_t m) const { return weights_[m]; }

  bool has_unnorm_weights() const noexcept { return unnorm_weights_.has_value(); }
  /// a_m = Zhat_m; throws std::logic_error for unweighted sources.
  std::span<const double> unnorm_weights() const;

  double aggregated_weight() const noexcept { return aggregated_weight_; }
  CompressionMode mode() const noexcept { return mode_; }
  KernelKind kernel() const noexcept { return kernel_; }

  bool has_covariances() const noexcept { return !covariances_.empty(); }
  const Matrix& covariance(std::size_t m) const { return covariances_[m]; }
  const std::vector<Matrix>& covariances() const noexcept { return covariances_; }

 private:
  Matrix particles_;
  std::vector<double> weights_;
  std::optional<std::vector<double>> unnorm_weights_;
  double aggregated_weight_;
  CompressionMode mode_;
  std::vector<Matrix> covariances_;
  KernelKind kernel_;
};

/// a_hat_m = sum over J_m of wbar_i (|J_m|/N for unweighted sets).
std::vector<double> cmc_weights(const WeightedSampleSet& s, const Assignment& a);

/// wbar_{m,i} = wbar_i / a_hat_m over J_m, in index-set order.
/// Throws std::invalid_argument("empty region") when a_hat_m = 0.
std::vector<double> within_region_weights(const WeightedSampleSet& s, const Assignment& a, std::size_t m);

struct StochasticRule {
  std::uint64_t seed = 0;
};
struct DeterministicRule {};
struct HSpecificRule {
  Integrand h;
};
using CompressionRule = std::variant<StochasticRule, DeterministicRule, HSpecificRule>;

/// Summary particles for every region with positive mass; zero-mass regions
/// are dropped. Stochastic selection draws one uniform per region from the
/// sub-stream derive_seed(seed, m).
CompressedSet compress(const WeightedSampleSet& s, const Assignment& a, const CompressionRule& rule);

/// sum_m a_hat_m g(s_m). For h-specific sets pass the identity on x[0].
double cmc_estimate(const CompressedSet& c, const Integrand& g);

/// Zhat = sum_m a_m, since each a_m = Zhat_m = (1/N) sum over J_m of w_i.
/// Throws std::invalid_argument("unweighted source").
double reconstruct_Z(const CompressedSet& c);

/// Deterministic summary particles with Gaussian kernels. full: within-region
/// weighted scatter + delta I; shared_diagonal: per-coordinate weighted
/// variance over all N samples + delta I, the same matrix for every particle.
CompressedSet kde_compress(const WeightedSampleSet& s, const Assignment& a, KernelKind kind, double delta = 0.1);

/// Gaussian mixture sum_m a_hat_m N(x; s_m, Sigma_m) with Cholesky factors
/// cached for density evaluation and sampling.
class KernelMixture {
 public:
  explicit KernelMixture(const CompressedSet& c);

  std::size_t size() const noexcept { return static_cast<std::size_t>(means_.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(means_.rows()); }

  double log_pdf(const VectorRef& x) const;
  double pdf(const VectorRef& x) const;
  /// log N(x; s_m, Sigma_m) for one component.
  double component_log_pdf(std::size_t m, const VectorRef& x) const;

  Vector sample(Rng& rng) const;
  Matrix sample(std::size_t n, Rng& rng) const;
  Vector mean() const;

 private:
  Matrix means_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<double> cumulative_;
  std::vector<Matrix> chol_;
  std::vector<double> log_norm_;
  bool shared_ = false;
};

/// n unweighted draws from the kernel mixture of c.
WeightedSampleSet kde_sample(const CompressedSet& c, std::size_t n, std::uint64_t seed);

struct LsResult {
  std::vector<double> weights;
  bool rank_deficient = false;
  double residual_norm = 0.0;
};

/// Least-squares weights for fixed particles: rows h_0 = 1, h_1..h_R,
/// targets [1, Ihat(h_1)..Ihat(h_R)]. Minimum-norm solution, not renormalized.
LsResult ls_weights(const Matrix& particles, const WeightedSampleSet& s, const MomentFamily& fam);

/// Bootstrap baseline: M multinomial draws by wbar, each weighted 1/M.
CompressedSet bootstrap_compress(const WeightedSampleSet& s, std::size_t m, std::uint64_t seed);

/// Scalars needed to transmit c: M(d+1) plain, M(d^2/2 + 3d/2 + 1) full
/// kernels, M(2d+1) shared diagonal, plus one for W when requested.
std::size_t payload_scalars(const CompressedSet& c, bool include_aggregated_weight);

std::string compressed_to_json(const CompressedSet& c);
CompressedSet compressed_from_json(const std::string& text);

}  // namespace cmc
