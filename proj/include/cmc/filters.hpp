#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "cmc/compress.hpp"
#include "cmc/core.hpp"
#include "cmc/partition.hpp"
#include "cmc/random.hpp"

namespace cmc {

/// x_t ~ p(x_t | x_{t-1}), y_t ~ p(y_t | x_t), plus the filter prior on x_0.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t obs_dim() const = 0;

  /// Replaces x by a draw from the transition kernel.
  virtual void propagate(Eigen::Ref<Vector> x, Rng& rng) const = 0;
  virtual double log_likelihood(const VectorRef& x, const VectorRef& y) const = 0;
  virtual Vector observe(const VectorRef& x, Rng& rng) const = 0;

  /// True initial state used to simulate trajectories.
  virtual Vector initial_state() const = 0;
  /// Draw from the filter's prior on x_0.
  virtual Vector sample_initial(Rng& rng) const = 0;
};

/// Gaussian prior N(mean, cov) on x_0; a zero-variance coordinate stays fixed.
struct GaussianPrior {
  Vector mean;
  Matrix cov;

  Vector sample(Rng& rng) const;
};

struct Trajectory {
  /// d x T true states x_1..x_T.
  Matrix states;
  /// d_y x T observations y_1..y_T.
  Matrix observations;
};

Trajectory simulate(const StateSpaceModel& model, std::size_t steps, std::uint64_t seed);

/// x_t = |x_{t-1}| + v_t, y_t = log(x_t^2) + u_t with unit-variance noises.
class ScalarAbsLogModel final : public StateSpaceModel {
 public:
  struct Params {
    double transition_sd = 1.0;
    double observation_sd = 1.0;
    double x0 = 0.0;
    double prior_sd = 1.0;
  };

  ScalarAbsLogModel() = default;
  explicit ScalarAbsLogModel(Params p) : p_(p) {}

  std::size_t state_dim() const override { return 1; }
  std::size_t obs_dim() const override { return 1; }
  void propagate(Eigen::Ref<Vector> x, Rng& rng) const override;
  double log_likelihood(const VectorRef& x, const VectorRef& y) const override;
  Vector observe(const VectorRef& x, Rng& rng) const override;
  Vector initial_state() const override;
  Vector sample_initial(Rng& rng) const override;

 private:
  Params p_;
};

/// Bearings-only tracking: x = [p1, p2, v1, v2], x_{t+1} = Phi x_t + Gamma eta,
/// y_t = atan2(p1, p2) + zeta with the residual wrapped to [-pi, pi).
class BearingsOnlyModel final : public StateSpaceModel {
 public:
  struct Params {
    double sigma_eta = 0.001;
    double sigma_zeta = 0.005;
    Vector x0 = (Vector(4) << -0.05, 0.001, 0.7, -0.055).finished();
    GaussianPrior prior{(Vector(4) << -0.05, 0.001, 0.7, -0.055).finished(), Matrix::Identity(4, 4)};
  };

  BearingsOnlyModel() = default;
  explicit BearingsOnlyModel(Params p) : p_(std::move(p)) {}

  static Matrix phi();
  static Matrix gamma();

  std::size_t state_dim() const override { return 4; }
  std::size_t obs_dim() const override { return 1; }
  void propagate(Eigen::Ref<Vector> x, Rng& rng) const override;
  double log_likelihood(const VectorRef& x, const VectorRef& y) const override;
  Vector observe(const VectorRef& x, Rng& rng) const override;
  Vector initial_state() const override { return p_.x0; }
  Vector sample_initial(Rng& rng) const override { return p_.prior.sample(rng); }

 private:
  Params p_;
};

enum class SensorKind { bearing, signal_strength, range, radial_velocity };

struct Sensor {
  SensorKind kind;
  Vector position;  // r_i in R^2
  double sd;
};

/// Noise-free reading h_i(x) of a sensor on the coordinated-turn state.
double sensor_reading(const Sensor& s, const VectorRef& x);

/// log N(y; h_i(x), sd^2); bearing residuals are wrapped to [-pi, pi).
double sensor_log_likelihood(const Sensor& s, const VectorRef& x, double y);

/// Nearly coordinated turn: x = [p1, p2, v1, v2, gamma], transition
/// F(gamma) x + eta with eta ~ N(0, D), and a network of sensors each giving
/// one scalar reading per step.
class CoordinatedTurnModel final : public StateSpaceModel {
 public:
  struct Params {
    Vector process_var = (Vector(5) << 0.05, 0.05, 0.04, 0.04, 0.0).finished();
    Vector x0 = (Vector(5) << -1.0, -1.0, 0.3, 0.2, 0.139).finished();
    GaussianPrior prior{(Vector(5) << -1.0, -1.0, 0.3, 0.2, 0.139).finished(),
                        Vector((Vector(5) << 1.0, 1.0, 1.0, 1.0, 0.0).finished()).asDiagonal()};
  };

  CoordinatedTurnModel(std::vector<Sensor> sensors, Params p);
  explicit CoordinatedTurnModel(std::vector<Sensor> sensors) : CoordinatedTurnModel(std::move(sensors), Params{}) {}

  /// K sensors uniform in [-3, 3]^2, kinds assigned in blocks of K/4
  /// (bearing sd 0.175, signal strength sd 2, range sd 0.14, radial velocity sd 0.004).
  static std::vector<Sensor> random_sensors(std::size_t k, Rng& rng);

  /// Transition matrix F(gamma); the gamma -> 0 limit is the constant-velocity matrix.
  static Matrix transition(double gamma);

  const std::vector<Sensor>& sensors() const noexcept { return sensors_; }

  std::size_t state_dim() const override { return 5; }
  std::size_t obs_dim() const override { return sensors_.size(); }
  void propagate(Eigen::Ref<Vector> x, Rng& rng) const override;
  double log_likelihood(const VectorRef& x, const VectorRef& y) const override;
  /// Likelihood of the readings of a subset of sensors.
  double log_likelihood(const VectorRef& x, const VectorRef& y, const std::vector<std::size_t>& subset) const;
  Vector observe(const VectorRef& x, Rng& rng) const override;
  Vector initial_state() const override { return p_.x0; }
  Vector sample_initial(Rng& rng) const override { return p_.prior.sample(rng); }

 private:
  std::vector<Sensor> sensors_;
  Params p_;
  Vector process_sd_;
};

/// x_t = A x_{t-1} + N(0, Q), y_t = H x_t + N(0, R). Used as a Kalman oracle.
class LinearGaussianModel final : public StateSpaceModel {
 public:
  LinearGaussianModel(Matrix a, Matrix q, Matrix h, Matrix r, GaussianPrior prior, Vector x0);

  const Matrix& a() const noexcept { return a_; }
  const Matrix& q() const noexcept { return q_; }
  const Matrix& h() const noexcept { return h_; }
  const Matrix& r() const noexcept { return r_; }
  const GaussianPrior& prior() const noexcept { return prior_; }

  std::size_t state_dim() const override { return static_cast<std::size_t>(a_.rows()); }
  std::size_t obs_dim() const override { return static_cast<std::size_t>(h_.rows()); }
  void propagate(Eigen::Ref<Vector> x, Rng& rng) const override;
  double log_likelihood(const VectorRef& x, const VectorRef& y) const override;
  Vector observe(const VectorRef& x, Rng& rng) const override;
  Vector initial_state() const override { return x0_; }
  Vector sample_initial(Rng& rng) const override { return prior_.sample(rng); }

 private:
  Matrix a_, q_, h_, r_;
  Matrix q_chol_, r_chol_;
  Eigen::LLT<Matrix> r_llt_;
  double r_log_norm_;
  GaussianPrior prior_;
  Vector x0_;
};

struct KalmanResult {
  Matrix means;
  std::vector<Matrix> covariances;
};

/// Exact filtering moments for a linear-Gaussian model.
KalmanResult kalman_filter(const LinearGaussianModel& model, const Matrix& observations);

enum class ResamplingScheme { multinomial, systematic };

struct FilterOptions {
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  PartitionStrategy partition = PartitionStrategy::uniform_grid;
  double delta = 0.1;
};

struct FilterResult {
  /// d x T posterior-mean estimates.
  Matrix estimates;
  /// Likelihood evaluations at each step.
  std::vector<std::size_t> evaluations;
  Matrix final_particles;
  std::uint64_t seed = 0;
  /// Steps at which every weight vanished and the weights were reset to uniform.
  std::size_t degenerate_steps = 0;

  std::size_t total_evaluations() const;
};

FilterResult bpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::uint64_t seed,
                 const FilterOptions& opts = {});

/// Gaussian particle filter: I-GPF with one region.
FilterResult gpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::uint64_t seed,
                 const FilterOptions& opts = {});

/// Propagate, weight by the likelihood, compress into an M-component kernel
/// mixture (deterministic C-MC, full covariances), redraw N particles from it.
FilterResult igpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::size_t m,
                  std::uint64_t seed, const FilterOptions& opts = {});

/// Propagate, compress the unweighted cloud into M summaries, weight each by
/// a_hat_m p(y_t | s_m), resample N from the summaries. Regions left empty by
/// the partition cost no evaluation.
FilterResult cpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::size_t m,
                 std::uint64_t seed, const FilterOptions& opts = {});

/// Mean over time and components of the squared estimate error.
double mse(const FilterResult& result, const Matrix& truth);

enum class DpfMethod { single_gaussian, cmc };

struct DpfOptions {
  std::size_t processors = 4;
  std::size_t particles_per_node = 250;
  std::size_t regions = 4;
  DpfMethod method = DpfMethod::cmc;
  KernelKind kernel = KernelKind::full;
  PartitionStrategy partition = PartitionStrategy::uniform_grid;
  double delta = 0.1;
  std::size_t component_cap = 1'000'000;
};

/// Processors on a regular grid over [-3, 3]^2 (2 x 2 for L = 4, 4 x 2 for L = 8).
Matrix processor_grid(std::size_t processors);

/// Sensor indices handled by each processor (closest processor wins, ties to the lowest index).
std::vector<std::vector<std::size_t>> assign_sensors(const std::vector<Sensor>& sensors, const Matrix& processors);

/// Centralized distributed particle filter. Each step the central node
/// propagates its particles and fits the predictive Gaussian N(m, P); node l
/// draws from N(m, L P), weights by its sensors' likelihood and reports a
/// kernel approximation (one full-covariance Gaussian for single_gaussian,
/// M-region C-MC for cmc). The central node multiplies the reports and
/// redraws its particles from the product mixture, whose mean is the estimate.
FilterResult dpf(const CoordinatedTurnModel& model, const Matrix& observations, const DpfOptions& opts,
                 std::uint64_t seed);

}  // namespace cmc
