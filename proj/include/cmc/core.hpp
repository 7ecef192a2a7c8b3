#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Scalar test function h : R^d -> R.
using Integrand = std::function<double(const VectorRef&)>;

/// N points in R^d (stored column-wise, d x N) with normalized weights and,
/// for importance-sampling output, the unnormalized weights they came from.
///
/// Immutable after construction. Standard MC / MCMC output carries no
/// unnormalized weights and every normalized weight is exactly 1/N.
class WeightedSampleSet {
 public:
  /// Equal-weight set (MC or MCMC output).
  static WeightedSampleSet unweighted(Matrix points);

  /// Importance-weighted set; weights are plain (not log) and nonnegative.
  static WeightedSampleSet weighted(Matrix points, std::vector<double> unnorm_weights);

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.rows()); }

  const Matrix& points() const noexcept { return points_; }
  auto point(std::size_t i) const { return points_.col(static_cast<Eigen::Index>(i)); }

  std::span<const double> norm_weights() const noexcept { return norm_weights_; }
  double norm_weight(std::size_t i) const { return norm_weights_[i]; }

  bool has_unnorm_weights() const noexcept { return unnorm_weights_.has_value(); }
  /// Throws std::logic_error when the set is unweighted.
  std::span<const double> unnorm_weights() const;

 private:
  WeightedSampleSet(Matrix points, std::optional<std::vector<double>> unnorm, std::vector<double> norm);

  Matrix points_;
  std::optional<std::vector<double>> unnorm_weights_;
  std::vector<double> norm_weights_;
};

/// Functions h_1..h_R with positive loss weights xi_r^2.
class MomentFamily {
 public:
  MomentFamily(std::vector<Integrand> functions, std::vector<double> loss_weights);

  /// h_r(x) = x_coord^r for r = 1..R, unit loss weights.
  static MomentFamily powers(std::size_t max_power, std::size_t coord = 0);

  std::size_t size() const noexcept { return functions_.size(); }
  const Integrand& function(std::size_t r) const { return functions_[r]; }
  double loss_weight(std::size_t r) const { return loss_weights_[r]; }
  std::span<const double> loss_weights() const noexcept { return loss_weights_; }

  MomentFamily with_loss_weights(std::vector<double> loss_weights) const;

 private:
  std::vector<Integrand> functions_;
  std::vector<double> loss_weights_;
};

/// w_i / sum_j w_j. Throws NumericalError("degenerate weights") when the input
/// is all zero or contains a non-finite entry.
std::vector<double> normalize_weights(std::span<const double> w);

/// Subtracts the max and exponentiates, so the largest weight becomes 1.
/// Returns the plain weights; `log_shift` receives the subtracted max.
std::vector<double> exp_shift(std::span<const double> log_w, double& log_shift);

/// sum_i wbar_i h(x_i).
double mc_estimate(const WeightedSampleSet& s, const Integrand& h);

/// Zhat = (1/N) sum_n w_n. Throws std::invalid_argument for unweighted sets.
double marginal_likelihood(const WeightedSampleSet& s);

/// Packs scalars into a 1 x N point matrix.
Matrix points_from_scalars(std::span<const double> xs);

/// CSV: header x1..xd[,w], one row per sample. Values written shortest
/// round-trip, so read_samples_csv(write_samples_csv(s)) reproduces s exactly.
std::string write_samples_csv(const WeightedSampleSet& s);
WeightedSampleSet read_samples_csv(const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace cmc
