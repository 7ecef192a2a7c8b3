#include "cmc/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "cmc/error.hpp"
#include "cmc/fusion.hpp"

namespace cmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

double gaussian_log_pdf(double r, double sd) { return -0.5 * (r / sd) * (r / sd) - std::log(sd) - 0.5 * kLog2Pi; }

// Normalized weights from log weights; all -inf gives uniform and sets `degenerate`.
std::vector<double> normalized_from_log(const std::vector<double>& log_w, bool& degenerate) {
  double top = kNegInf;
  for (double v : log_w) {
    if (std::isnan(v)) throw NumericalError("NaN log-likelihood");
    top = std::max(top, v);
  }
  std::vector<double> w(log_w.size());
  degenerate = !std::isfinite(top);
  if (degenerate) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_w[i] - top);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<std::size_t> resample(const std::vector<double>& w, std::size_t n, ResamplingScheme scheme, Rng& rng) {
  return scheme == ResamplingScheme::systematic ? systematic_resample(w, n, rng) : multinomial_resample(w, n, rng);
}

Matrix initial_cloud(const StateSpaceModel& model, std::size_t n, Rng& rng) {
  Matrix x(static_cast<Eigen::Index>(model.state_dim()), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.cols(); ++i) x.col(i) = model.sample_initial(rng);
  return x;
}

void propagate_cloud(const StateSpaceModel& model, Matrix& x, Rng& rng) {
  for (Eigen::Index i = 0; i < x.cols(); ++i) model.propagate(x.col(i), rng);
  if (!x.allFinite()) throw NumericalError("non-finite particle state");
}

void check_observations(const StateSpaceModel& model, const Matrix& obs) {
  if (static_cast<std::size_t>(obs.rows()) != model.obs_dim()) throw std::invalid_argument("observation dimension mismatch");
  if (obs.cols() < 1) throw std::invalid_argument("at least one observation required");
}

// Weighted cloud after propagation; returns per-particle normalized weights.
std::vector<double> weigh(const StateSpaceModel& model, const Matrix& x, const VectorRef& y, bool& degenerate) {
  std::vector<double> log_w(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) log_w[static_cast<std::size_t>(i)] = model.log_likelihood(x.col(i), y);
  return normalized_from_log(log_w, degenerate);
}

Vector weighted_mean(const Matrix& x, const std::vector<double>& w) {
  Vector m = Vector::Zero(x.rows());
  for (Eigen::Index i = 0; i < x.cols(); ++i) m += w[static_cast<std::size_t>(i)] * x.col(i);
  return m;
}

Matrix psd_factor(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw NumericalError("covariance factorization failed");
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

}  // namespace

Vector GaussianPrior::sample(Rng& rng) const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw std::invalid_argument("prior covariance shape mismatch");
  Vector z(mean.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return mean + psd_factor(cov) * z;
}

Trajectory simulate(const StateSpaceModel& model, std::size_t steps, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("trajectory needs at least one step");
  Rng rng(seed);
  Trajectory tr;
  tr.states.resize(static_cast<Eigen::Index>(model.state_dim()), static_cast<Eigen::Index>(steps));
  tr.observations.resize(static_cast<Eigen::Index>(model.obs_dim()), static_cast<Eigen::Index>(steps));
  Vector x = model.initial_state();
  for (std::size_t t = 0; t < steps; ++t) {
    model.propagate(x, rng);
    tr.states.col(static_cast<Eigen::Index>(t)) = x;
    tr.observations.col(static_cast<Eigen::Index>(t)) = model.observe(x, rng);
  }
  return tr;
}

// ---- scalar |x| / log x^2 model ----

void ScalarAbsLogModel::propagate(Eigen::Ref<Vector> x, Rng& rng) const {
  x[0] = std::abs(x[0]) + p_.transition_sd * rng.normal();
}

double ScalarAbsLogModel::log_likelihood(const VectorRef& x, const VectorRef& y) const {
  if (x[0] == 0.0) return kNegInf;
  return gaussian_log_pdf(y[0] - std::log(x[0] * x[0]), p_.observation_sd);
}

Vector ScalarAbsLogModel::observe(const VectorRef& x, Rng& rng) const {
  Vector y(1);
  y[0] = std::log(x[0] * x[0]) + p_.observation_sd * rng.normal();
  return y;
}

Vector ScalarAbsLogModel::initial_state() const { return Vector::Constant(1, p_.x0); }

Vector ScalarAbsLogModel::sample_initial(Rng& rng) const {
  return Vector::Constant(1, p_.x0 + p_.prior_sd * rng.normal());
}

// ---- bearings-only tracking ----

Matrix BearingsOnlyModel::phi() {
  Matrix f = Matrix::Identity(4, 4);
  f(0, 2) = 1.0;
  f(1, 3) = 1.0;
  return f;
}

Matrix BearingsOnlyModel::gamma() {
  Matrix g = Matrix::Zero(4, 2);
  g(0, 0) = 0.5;
  g(1, 1) = 0.5;
  g(2, 0) = 1.0;
  g(3, 1) = 1.0;
  return g;
}

void BearingsOnlyModel::propagate(Eigen::Ref<Vector> x, Rng& rng) const {
  const double e1 = p_.sigma_eta * rng.normal();
  const double e2 = p_.sigma_eta * rng.normal();
  x[0] += x[2] + 0.5 * e1;
  x[1] += x[3] + 0.5 * e2;
  x[2] += e1;
  x[3] += e2;
}

double BearingsOnlyModel::log_likelihood(const VectorRef& x, const VectorRef& y) const {
  return gaussian_log_pdf(wrap_angle(y[0] - std::atan2(x[0], x[1])), p_.sigma_zeta);
}

Vector BearingsOnlyModel::observe(const VectorRef& x, Rng& rng) const {
  Vector y(1);
  y[0] = std::atan2(x[0], x[1]) + p_.sigma_zeta * rng.normal();
  return y;
}

// ---- coordinated turn with a sensor network ----

double sensor_reading(const Sensor& s, const VectorRef& x) {
  const double d1 = x[0] - s.position[0];
  const double d2 = x[1] - s.position[1];
  const double r2 = d1 * d1 + d2 * d2;
  switch (s.kind) {
    case SensorKind::bearing:
      return std::atan2(d1, d2);
    case SensorKind::signal_strength:
      return 1.0 / (r2 + 1e-4);
    case SensorKind::range:
      return std::sqrt(r2);
    case SensorKind::radial_velocity: {
      const double r = std::sqrt(r2);
      return r > 0.0 ? (d1 * x[2] + d2 * x[3]) / r : 0.0;
    }
  }
  return 0.0;
}

double sensor_log_likelihood(const Sensor& s, const VectorRef& x, double y) {
  double r = y - sensor_reading(s, x);
  if (s.kind == SensorKind::bearing) r = wrap_angle(r);
  return gaussian_log_pdf(r, s.sd);
}

CoordinatedTurnModel::CoordinatedTurnModel(std::vector<Sensor> sensors, Params p)
    : sensors_(std::move(sensors)), p_(std::move(p)) {
  if (sensors_.empty()) throw std::invalid_argument("at least one sensor required");
  if (p_.process_var.size() != 5 || p_.x0.size() != 5) throw std::invalid_argument("coordinated-turn state has 5 components");
  if ((p_.process_var.array() < 0.0).any()) throw std::invalid_argument("process variances must be nonnegative");
  process_sd_ = p_.process_var.cwiseSqrt();
}

std::vector<Sensor> CoordinatedTurnModel::random_sensors(std::size_t k, Rng& rng) {
  if (k < 4 || k % 4 != 0) throw std::invalid_argument("sensor count must be a positive multiple of 4");
  constexpr SensorKind kinds[] = {SensorKind::bearing, SensorKind::signal_strength, SensorKind::range,
                                  SensorKind::radial_velocity};
  constexpr double sds[] = {0.175, 2.0, 0.14, 0.004};
  std::vector<Sensor> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Vector r(2);
    r[0] = rng.uniform(-3.0, 3.0);
    r[1] = rng.uniform(-3.0, 3.0);
    const std::size_t type = i / (k / 4);
    out.push_back({kinds[type], std::move(r), sds[type]});
  }
  return out;
}

Matrix CoordinatedTurnModel::transition(double g) {
  double s_over_g = 0.0;
  double c_over_g = 0.0;
  if (std::abs(g) < 1e-6) {
    s_over_g = 1.0 - g * g / 6.0;
    c_over_g = -0.5 * g;
  } else {
    s_over_g = std::sin(g) / g;
    c_over_g = (std::cos(g) - 1.0) / g;
  }
  Matrix f = Matrix::Identity(5, 5);
  f(0, 2) = s_over_g;
  f(0, 3) = c_over_g;
  f(1, 2) = c_over_g;
  f(1, 3) = s_over_g;
  f(2, 2) = std::cos(g);
  f(2, 3) = -std::sin(g);
  f(3, 2) = std::sin(g);
  f(3, 3) = std::cos(g);
  return f;
}

void CoordinatedTurnModel::propagate(Eigen::Ref<Vector> x, Rng& rng) const {
  Vector next = transition(x[4]) * x;
  for (Eigen::Index k = 0; k < 5; ++k) next[k] += process_sd_[k] * rng.normal();
  x = next;
}

double CoordinatedTurnModel::log_likelihood(const VectorRef& x, const VectorRef& y) const {
  double lp = 0.0;
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    lp += sensor_log_likelihood(sensors_[i], x, y[static_cast<Eigen::Index>(i)]);
  }
  return lp;
}

double CoordinatedTurnModel::log_likelihood(const VectorRef& x, const VectorRef& y,
                                            const std::vector<std::size_t>& subset) const {
  double lp = 0.0;
  for (std::size_t i : subset) lp += sensor_log_likelihood(sensors_.at(i), x, y[static_cast<Eigen::Index>(i)]);
  return lp;
}

Vector CoordinatedTurnModel::observe(const VectorRef& x, Rng& rng) const {
  Vector y(static_cast<Eigen::Index>(sensors_.size()));
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = sensor_reading(sensors_[i], x) + sensors_[i].sd * rng.normal();
  }
  return y;
}

// ---- linear Gaussian ----

LinearGaussianModel::LinearGaussianModel(Matrix a, Matrix q, Matrix h, Matrix r, GaussianPrior prior, Vector x0)
    : a_(std::move(a)), q_(std::move(q)), h_(std::move(h)), r_(std::move(r)), prior_(std::move(prior)), x0_(std::move(x0)) {
  const auto d = a_.rows();
  if (a_.cols() != d || q_.rows() != d || q_.cols() != d || h_.cols() != d || r_.rows() != h_.rows() ||
      r_.cols() != h_.rows() || x0_.size() != d || prior_.mean.size() != d) {
    throw std::invalid_argument("linear-Gaussian model shapes are inconsistent");
  }
  q_chol_ = psd_factor(q_);
  r_llt_.compute(r_);
  if (r_llt_.info() != Eigen::Success) throw std::invalid_argument("observation covariance must be positive definite");
  r_chol_ = r_llt_.matrixL();
  r_log_norm_ = -0.5 * static_cast<double>(r_.rows()) * kLog2Pi - r_chol_.diagonal().array().log().sum();
}

void LinearGaussianModel::propagate(Eigen::Ref<Vector> x, Rng& rng) const {
  Vector z(q_.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  x = a_ * x + q_chol_ * z;
}

double LinearGaussianModel::log_likelihood(const VectorRef& x, const VectorRef& y) const {
  const Vector z = r_chol_.triangularView<Eigen::Lower>().solve(y - h_ * x);
  return r_log_norm_ - 0.5 * z.squaredNorm();
}

Vector LinearGaussianModel::observe(const VectorRef& x, Rng& rng) const {
  Vector z(r_.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return h_ * x + r_chol_ * z;
}

KalmanResult kalman_filter(const LinearGaussianModel& model, const Matrix& observations) {
  check_observations(model, observations);
  KalmanResult out;
  out.means.resize(model.a().rows(), observations.cols());
  Vector m = model.prior().mean;
  Matrix p = model.prior().cov;
  for (Eigen::Index t = 0; t < observations.cols(); ++t) {
    m = model.a() * m;
    p = model.a() * p * model.a().transpose() + model.q();
    const Matrix s = model.h() * p * model.h().transpose() + model.r();
    const Matrix k = p * model.h().transpose() * s.llt().solve(Matrix::Identity(s.rows(), s.rows()));
    m += k * (observations.col(t) - model.h() * m);
    p = (Matrix::Identity(p.rows(), p.cols()) - k * model.h()) * p;
    p = 0.5 * (p + p.transpose());
    out.means.col(t) = m;
    out.covariances.push_back(p);
  }
  return out;
}

// ---- filters ----

std::size_t FilterResult::total_evaluations() const {
  std::size_t s = 0;
  for (auto e : evaluations) s += e;
  return s;
}

FilterResult bpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::uint64_t seed,
                 const FilterOptions& opts) {
  if (n < 2) throw std::invalid_argument("particle filter needs N >= 2");
  check_observations(model, observations);
  Rng rng(seed);
  FilterResult out;
  out.seed = seed;
  out.estimates.resize(static_cast<Eigen::Index>(model.state_dim()), observations.cols());
  Matrix x = initial_cloud(model, n, rng);
  for (Eigen::Index t = 0; t < observations.cols(); ++t) {
    propagate_cloud(model, x, rng);
    bool degenerate = false;
    const auto w = weigh(model, x, observations.col(t), degenerate);
    out.degenerate_steps += degenerate ? 1 : 0;
    out.evaluations.push_back(n);
    out.estimates.col(t) = weighted_mean(x, w);
    const auto idx = resample(w, n, opts.resampling, rng);
    Matrix next(x.rows(), x.cols());
    for (std::size_t i = 0; i < n; ++i) next.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(idx[i]));
    x = std::move(next);
  }
  out.final_particles = std::move(x);
  return out;
}

FilterResult gpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::uint64_t seed,
                 const FilterOptions& opts) {
  return igpf(model, observations, n, 1, seed, opts);
}

FilterResult igpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::size_t m,
                  std::uint64_t seed, const FilterOptions& opts) {
  if (n < 2) throw std::invalid_argument("particle filter needs N >= 2");
  if (m < 1 || m > n) throw std::invalid_argument("I-GPF needs 1 <= M <= N");
  check_observations(model, observations);
  Rng rng(seed);
  FilterResult out;
  out.seed = seed;
  out.estimates.resize(static_cast<Eigen::Index>(model.state_dim()), observations.cols());
  Matrix x = initial_cloud(model, n, rng);
  for (Eigen::Index t = 0; t < observations.cols(); ++t) {
    propagate_cloud(model, x, rng);
    bool degenerate = false;
    auto w = weigh(model, x, observations.col(t), degenerate);
    out.degenerate_steps += degenerate ? 1 : 0;
    out.evaluations.push_back(n);
    out.estimates.col(t) = weighted_mean(x, w);
    const auto s = WeightedSampleSet::weighted(std::move(x), std::move(w));
    const Partition p = build_partition(s, opts.partition, m, rng.next());
    const KernelMixture mixture(kde_compress(s, assign(p, s), KernelKind::full, opts.delta));
    x = mixture.sample(n, rng);
  }
  out.final_particles = std::move(x);
  return out;
}

FilterResult cpf(const StateSpaceModel& model, const Matrix& observations, std::size_t n, std::size_t m,
                 std::uint64_t seed, const FilterOptions& opts) {
  if (n < 2) throw std::invalid_argument("particle filter needs N >= 2");
  if (m < 1 || m > n) throw std::invalid_argument("C-PF needs 1 <= M <= N");
  check_observations(model, observations);
  Rng rng(seed);
  FilterResult out;
  out.seed = seed;
  out.estimates.resize(static_cast<Eigen::Index>(model.state_dim()), observations.cols());
  Matrix x = initial_cloud(model, n, rng);
  for (Eigen::Index t = 0; t < observations.cols(); ++t) {
    propagate_cloud(model, x, rng);
    const auto s = WeightedSampleSet::unweighted(std::move(x));
    const Partition p = build_partition(s, opts.partition, m, rng.next());
    const CompressedSet c = compress(s, assign(p, s), DeterministicRule{});
    std::vector<double> log_w(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
      log_w[k] = std::log(c.weight(k)) + model.log_likelihood(c.particle(k), observations.col(t));
    }
    bool degenerate = false;
    const auto w = normalized_from_log(log_w, degenerate);
    out.degenerate_steps += degenerate ? 1 : 0;
    out.evaluations.push_back(c.size());
    out.estimates.col(t) = weighted_mean(c.particles(), w);
    const auto idx = resample(w, n, opts.resampling, rng);
    x.resize(c.particles().rows(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) x.col(static_cast<Eigen::Index>(i)) = c.particle(idx[i]);
  }
  out.final_particles = std::move(x);
  return out;
}

double mse(const FilterResult& result, const Matrix& truth) {
  if (result.estimates.rows() != truth.rows() || result.estimates.cols() != truth.cols()) {
    throw std::invalid_argument("estimate and truth shapes differ");
  }
  return (result.estimates - truth).array().square().mean();
}

// ---- distributed filter ----

Matrix processor_grid(std::size_t processors) {
  if (processors < 1) throw std::invalid_argument("at least one processor required");
  // Most square factorization, wider along the first axis.
  std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(processors)));
  while (processors % rows != 0) --rows;
  const std::size_t cols = processors / rows;
  Matrix out(2, static_cast<Eigen::Index>(processors));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t i = 0; i < cols; ++i) {
      out(0, k) = -3.0 + 6.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(cols);
      out(1, k) = -3.0 + 6.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(rows);
      ++k;
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> assign_sensors(const std::vector<Sensor>& sensors, const Matrix& processors) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(processors.cols()));
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < processors.cols(); ++l) {
      const double dist = (processors.col(l) - sensors[i].position).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = l;
      }
    }
    out[static_cast<std::size_t>(best)].push_back(i);
  }
  return out;
}

FilterResult dpf(const CoordinatedTurnModel& model, const Matrix& observations, const DpfOptions& opts,
                 std::uint64_t seed) {
  if (opts.processors < 1 || opts.particles_per_node < 2) throw std::invalid_argument("DPF needs L >= 1 and N_l >= 2");
  if (opts.regions < 1 || opts.regions > opts.particles_per_node) throw std::invalid_argument("DPF needs 1 <= M <= N_l");
  check_observations(model, observations);
  const std::size_t big_l = opts.processors;
  const std::size_t n_node = opts.particles_per_node;
  const std::size_t n = big_l * n_node;
  const auto owners = assign_sensors(model.sensors(), processor_grid(big_l));
  Rng rng(seed);
  FilterResult out;
  out.seed = seed;
  out.estimates.resize(5, observations.cols());
  Matrix x = initial_cloud(model, n, rng);
  for (Eigen::Index t = 0; t < observations.cols(); ++t) {
    propagate_cloud(model, x, rng);
    const Vector mean = x.rowwise().mean();
    // Coordinates on which every particle agrees are carried, not fused.
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      if (x.row(k).maxCoeff() > x.row(k).minCoeff()) active.push_back(k);
    }
    if (active.empty()) throw NumericalError("collapsed particle cloud");
    const auto da = static_cast<Eigen::Index>(active.size());
    Matrix xa(da, x.cols());
    for (Eigen::Index k = 0; k < da; ++k) xa.row(k) = x.row(active[static_cast<std::size_t>(k)]);
    const Vector ma = xa.rowwise().mean();
    const Matrix centred = xa.colwise() - ma;
    const Matrix pred = centred * centred.transpose() / static_cast<double>(n - 1);
    Eigen::LLT<Matrix> llt(static_cast<double>(big_l) * pred);
    if (llt.info() != Eigen::Success) throw NumericalError("predictive covariance not positive definite");
    const Matrix split_chol = llt.matrixL();

    std::vector<LocalReport> reports;
    reports.reserve(big_l);
    const std::uint64_t step_seed = rng.next();
    std::size_t evals = 0;
    for (std::size_t l = 0; l < big_l; ++l) {
      Rng node_rng(derive_seed(step_seed, l));
      Matrix local(da, static_cast<Eigen::Index>(n_node));
      std::vector<double> log_w(n_node);
      Vector full = mean;
      for (std::size_t i = 0; i < n_node; ++i) {
        Vector z(da);
        for (Eigen::Index k = 0; k < da; ++k) z[k] = node_rng.normal();
        const Vector xi = ma + split_chol * z;
        local.col(static_cast<Eigen::Index>(i)) = xi;
        for (Eigen::Index k = 0; k < da; ++k) full[active[static_cast<std::size_t>(k)]] = xi[k];
        log_w[i] = model.log_likelihood(full, observations.col(t), owners[l]);
      }
      evals += n_node;
      bool degenerate = false;
      auto w = normalized_from_log(log_w, degenerate);
      out.degenerate_steps += degenerate ? 1 : 0;
      const auto s = WeightedSampleSet::weighted(std::move(local), std::move(w));
      CompressedSet c = [&] {
        if (opts.method == DpfMethod::single_gaussian) {
          const Partition one = build_partition(s, PartitionStrategy::uniform_grid, 1, 0);
          return kde_compress(s, assign(one, s), KernelKind::full, opts.delta);
        }
        const Partition p = build_partition(s, opts.partition, opts.regions, node_rng.next());
        return kde_compress(s, assign(p, s), opts.kernel, opts.delta);
      }();
      reports.push_back(LocalReport::from_compressed(std::move(c), n_node, std::to_string(l)));
    }
    const ProductMixture product = fuse_product_of_mixtures(reports, opts.component_cap);
    const CompressedSet& mix = product.mixture;
    const Vector est_a = mix.particles() * Eigen::Map<const Vector>(mix.weights().data(), static_cast<Eigen::Index>(mix.size()));
    Vector est = mean;
    for (Eigen::Index k = 0; k < da; ++k) est[active[static_cast<std::size_t>(k)]] = est_a[k];
    out.estimates.col(t) = est;
    out.evaluations.push_back(evals);
    // Factor only the components that are actually drawn.
    const auto picks = multinomial_resample(mix.weights(), n, rng);
    std::unordered_map<std::size_t, Matrix> factors;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = factors.find(picks[i]);
      if (it == factors.end()) it = factors.emplace(picks[i], psd_factor(mix.covariance(picks[i]))).first;
      Vector z(da);
      for (Eigen::Index k = 0; k < da; ++k) z[k] = rng.normal();
      const Vector xi = mix.particle(picks[i]) + it->second * z;
      for (Eigen::Index k = 0; k < da; ++k) x(active[static_cast<std::size_t>(k)], static_cast<Eigen::Index>(i)) = xi[k];
    }
  }
  out.final_particles = std::move(x);
  return out;
}

}  // namespace cmc
