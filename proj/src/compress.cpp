#include "cmc/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "cmc/error.hpp"

namespace cmc {

namespace {

bool is_weighted(const WeightedSampleSet& s) { return s.has_unnorm_weights(); }

double total_unnorm(const WeightedSampleSet& s) {
  if (!is_weighted(s)) return static_cast<double>(s.size());
  const auto w = s.unnorm_weights();
  return std::accumulate(w.begin(), w.end(), 0.0);
}

void check_assignment(const WeightedSampleSet& s, const Assignment& a) {
  std::size_t total = 0;
  for (const auto& j : a.index_sets) {
    for (auto i : j) {
      if (i >= s.size()) throw std::invalid_argument("assignment index out of range");
    }
    total += j.size();
  }
  if (total != s.size()) throw std::invalid_argument("assignment does not cover the sample set");
}

// Within-region weighted mean; `ww` are the within-region weights.
Vector weighted_mean(const WeightedSampleSet& s, const std::vector<std::size_t>& j, const std::vector<double>& ww) {
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t k = 0; k < j.size(); ++k) mean += ww[k] * s.point(j[k]);
  return mean;
}

Matrix regularized(Matrix cov, double delta) {
  const auto d = cov.rows();
  cov = 0.5 * (cov + cov.transpose()).eval();
  Matrix reg = cov + delta * Matrix::Identity(d, d);
  if (Eigen::LLT<Matrix>(reg).info() == Eigen::Success) return reg;
  reg = cov + 10.0 * delta * Matrix::Identity(d, d);
  if (Eigen::LLT<Matrix>(reg).info() == Eigen::Success) return reg;
  throw NumericalError("kernel covariance not positive definite");
}

}  // namespace

std::string to_string(CompressionMode mode) {
  switch (mode) {
    case CompressionMode::stochastic: return "stochastic";
    case CompressionMode::deterministic: return "deterministic";
    case CompressionMode::h_specific: return "h_specific";
    case CompressionMode::ls: return "ls";
    case CompressionMode::bootstrap: return "bootstrap";
    case CompressionMode::raw: return "raw";
  }
  return "unknown";
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::none: return "none";
    case KernelKind::full: return "full";
    case KernelKind::shared_diagonal: return "shared_diagonal";
  }
  return "unknown";
}

CompressedSet::CompressedSet(Matrix particles, std::vector<double> weights, double aggregated_weight,
                             CompressionMode mode, std::optional<std::vector<double>> unnorm_weights,
                             std::vector<Matrix> covariances, KernelKind kernel)
    : particles_(std::move(particles)),
      weights_(std::move(weights)),
      unnorm_weights_(std::move(unnorm_weights)),
      aggregated_weight_(aggregated_weight),
      mode_(mode),
      covariances_(std::move(covariances)),
      kernel_(kernel) {
  const auto m = static_cast<std::size_t>(particles_.cols());
  if (m == 0 || particles_.rows() == 0) throw std::invalid_argument("compressed set needs at least one particle");
  if (weights_.size() != m) throw std::invalid_argument("one weight per particle required");
  if (!particles_.allFinite()) throw std::invalid_argument("particles must be finite");
  if (!(aggregated_weight_ >= 0.0) || !std::isfinite(aggregated_weight_)) {
    throw std::invalid_argument("aggregated weight must be finite and nonnegative");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w)) throw std::invalid_argument("weights must be finite");
    if (mode_ != CompressionMode::ls && w < 0.0) throw std::invalid_argument("weights must be nonnegative");
    sum += w;
  }
  if (mode_ != CompressionMode::ls && std::abs(sum - 1.0) > 1e-10) {
    throw std::invalid_argument("weights must sum to one");
  }
  if (unnorm_weights_ && unnorm_weights_->size() != m) {
    throw std::invalid_argument("one unnormalized weight per particle required");
  }
  if (kernel_ == KernelKind::none) {
    if (!covariances_.empty()) throw std::invalid_argument("covariances given without a kernel kind");
    return;
  }
  if (mode_ == CompressionMode::h_specific) throw std::invalid_argument("h-specific particles carry no kernels");
  if (covariances_.size() != m) throw std::invalid_argument("one covariance per particle required");
  const auto d = particles_.rows();
  for (const auto& c : covariances_) {
    if (c.rows() != d || c.cols() != d) throw std::invalid_argument("covariance dimension mismatch");
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff())) {
      throw std::invalid_argument("covariances must be symmetric");
    }
  }
}

std::span<const double> CompressedSet::unnorm_weights() const {
  if (!unnorm_weights_) throw std::logic_error("compressed set carries no unnormalized weights");
  return *unnorm_weights_;
}

std::vector<double> cmc_weights(const WeightedSampleSet& s, const Assignment& a) {
  std::vector<double> out;
  out.reserve(a.region_count());
  const double n = static_cast<double>(s.size());
  for (const auto& j : a.index_sets) {
    if (!is_weighted(s)) {
      out.push_back(static_cast<double>(j.size()) / n);
      continue;
    }
    double mass = 0.0;
    for (auto i : j) mass += s.norm_weight(i);
    out.push_back(mass);
  }
  return out;
}

std::vector<double> within_region_weights(const WeightedSampleSet& s, const Assignment& a, std::size_t m) {
  const auto& j = a.index_sets.at(m);
  if (!is_weighted(s)) {
    if (j.empty()) throw std::invalid_argument("empty region");
    return std::vector<double>(j.size(), 1.0 / static_cast<double>(j.size()));
  }
  double mass = 0.0;
  for (auto i : j) mass += s.norm_weight(i);
  if (!(mass > 0.0)) throw std::invalid_argument("empty region");
  std::vector<double> out;
  out.reserve(j.size());
  for (auto i : j) out.push_back(s.norm_weight(i) / mass);
  return out;
}

CompressedSet compress(const WeightedSampleSet& s, const Assignment& a, const CompressionRule& rule) {
  check_assignment(s, a);
  const auto masses = cmc_weights(s, a);
  const bool scalar = std::holds_alternative<HSpecificRule>(rule);
  const auto rows = scalar ? Eigen::Index{1} : static_cast<Eigen::Index>(s.dim());
  const double n = static_cast<double>(s.size());

  std::vector<Vector> particles;
  std::vector<double> weights;
  std::vector<double> unnorm;
  for (std::size_t m = 0; m < a.region_count(); ++m) {
    if (!(masses[m] > 0.0)) continue;
    const auto& j = a.index_sets[m];
    const auto ww = within_region_weights(s, a, m);
    Vector sm(rows);
    if (const auto* st = std::get_if<StochasticRule>(&rule)) {
      Rng rng(derive_seed(st->seed, m));
      const auto cum = cumulative_sum(ww);
      sm = s.point(j[inverse_cdf_pick(cum, rng.uniform())]);
    } else if (std::holds_alternative<DeterministicRule>(rule)) {
      sm = weighted_mean(s, j, ww);
    } else {
      const auto& h = std::get<HSpecificRule>(rule).h;
      double acc = 0.0;
      for (std::size_t k = 0; k < j.size(); ++k) {
        const double v = h(s.point(j[k]));
        if (!std::isfinite(v)) throw NumericalError("non-finite integrand");
        acc += ww[k] * v;
      }
      sm[0] = acc;
    }
    particles.push_back(std::move(sm));
    weights.push_back(masses[m]);
    if (is_weighted(s)) {
      double zm = 0.0;
      for (auto i : j) zm += s.unnorm_weights()[i];
      unnorm.push_back(zm / n);
    }
  }
  Matrix pts(rows, static_cast<Eigen::Index>(particles.size()));
  for (std::size_t m = 0; m < particles.size(); ++m) pts.col(static_cast<Eigen::Index>(m)) = particles[m];
  const CompressionMode mode = std::holds_alternative<StochasticRule>(rule)      ? CompressionMode::stochastic
                               : std::holds_alternative<DeterministicRule>(rule) ? CompressionMode::deterministic
                                                                                 : CompressionMode::h_specific;
  std::optional<std::vector<double>> a_m;
  if (is_weighted(s)) a_m = std::move(unnorm);
  return CompressedSet(std::move(pts), std::move(weights), total_unnorm(s), mode, std::move(a_m));
}

double cmc_estimate(const CompressedSet& c, const Integrand& g) {
  double acc = 0.0;
  for (std::size_t m = 0; m < c.size(); ++m) {
    const double v = g(c.particle(m));
    if (!std::isfinite(v)) throw NumericalError("non-finite integrand");
    acc += c.weight(m) * v;
  }
  return acc;
}

double reconstruct_Z(const CompressedSet& c) {
  if (!c.has_unnorm_weights()) throw std::invalid_argument("unweighted source");
  const auto a = c.unnorm_weights();
  return std::accumulate(a.begin(), a.end(), 0.0);
}

CompressedSet kde_compress(const WeightedSampleSet& s, const Assignment& a, KernelKind kind, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("kernel regularization delta must be positive");
  if (kind == KernelKind::none) throw std::invalid_argument("kde_compress needs a kernel kind");
  const CompressedSet base = compress(s, a, DeterministicRule{});
  const auto d = static_cast<Eigen::Index>(s.dim());
  std::vector<Matrix> covs;
  covs.reserve(base.size());
  if (kind == KernelKind::shared_diagonal) {
    Vector mean = Vector::Zero(d);
    for (std::size_t i = 0; i < s.size(); ++i) mean += s.norm_weight(i) * s.point(i);
    Vector var = Vector::Zero(d);
    for (std::size_t i = 0; i < s.size(); ++i) var += s.norm_weight(i) * (s.point(i) - mean).cwiseAbs2();
    const Matrix shared = regularized(Matrix(var.asDiagonal()), delta);
    covs.assign(base.size(), shared);
  } else {
    std::size_t k = 0;
    for (std::size_t m = 0; m < a.region_count(); ++m) {
      const auto& j = a.index_sets[m];
      if (j.empty()) continue;
      double mass = 0.0;
      for (auto i : j) mass += s.norm_weight(i);
      if (is_weighted(s) && !(mass > 0.0)) continue;
      const auto ww = within_region_weights(s, a, m);
      const Vector sm = base.particle(k);
      Matrix scatter = Matrix::Zero(d, d);
      for (std::size_t q = 0; q < j.size(); ++q) {
        const Vector diff = s.point(j[q]) - sm;
        scatter.noalias() += ww[q] * diff * diff.transpose();
      }
      covs.push_back(regularized(std::move(scatter), delta));
      ++k;
    }
  }
  std::optional<std::vector<double>> a_m;
  if (base.has_unnorm_weights()) a_m = std::vector<double>(base.unnorm_weights().begin(), base.unnorm_weights().end());
  return CompressedSet(base.particles(), std::vector<double>(base.weights().begin(), base.weights().end()),
                       base.aggregated_weight(), CompressionMode::deterministic, std::move(a_m), std::move(covs),
                       kind);
}

KernelMixture::KernelMixture(const CompressedSet& c)
    : means_(c.particles()), weights_(c.weights().begin(), c.weights().end()) {
  if (!c.has_covariances()) throw std::invalid_argument("kernel mixture needs covariances");
  const auto d = static_cast<double>(c.dim());
  cumulative_ = cumulative_sum(weights_);
  shared_ = c.kernel() == KernelKind::shared_diagonal;
  const std::size_t factors = shared_ ? 1 : c.size();
  for (std::size_t m = 0; m < factors; ++m) {
    Eigen::LLT<Matrix> llt(c.covariance(m));
    if (llt.info() != Eigen::Success) throw NumericalError("kernel covariance not positive definite");
    Matrix l = llt.matrixL();
    log_norm_.push_back(-0.5 * d * std::log(2.0 * std::numbers::pi) - l.diagonal().array().log().sum());
    chol_.push_back(std::move(l));
  }
  for (double w : weights_) log_weights_.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
}

double KernelMixture::component_log_pdf(std::size_t m, const VectorRef& x) const {
  const std::size_t f = shared_ ? 0 : m;
  const Vector z = chol_[f].triangularView<Eigen::Lower>().solve(x - means_.col(static_cast<Eigen::Index>(m)));
  return log_norm_[f] - 0.5 * z.squaredNorm();
}

double KernelMixture::log_pdf(const VectorRef& x) const {
  std::vector<double> terms(size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < size(); ++m) {
    terms[m] = log_weights_[m] + component_log_pdf(m, x);
    top = std::max(top, terms[m]);
  }
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

double KernelMixture::pdf(const VectorRef& x) const { return std::exp(log_pdf(x)); }

Vector KernelMixture::sample(Rng& rng) const {
  const auto m = inverse_cdf_pick(cumulative_, rng.uniform());
  Vector z(means_.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return means_.col(static_cast<Eigen::Index>(m)) + chol_[shared_ ? 0 : m] * z;
}

Matrix KernelMixture::sample(std::size_t n, Rng& rng) const {
  Matrix out(means_.rows(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = sample(rng);
  return out;
}

Vector KernelMixture::mean() const {
  Vector mu = Vector::Zero(means_.rows());
  for (std::size_t m = 0; m < size(); ++m) mu += weights_[m] * means_.col(static_cast<Eigen::Index>(m));
  return mu;
}

WeightedSampleSet kde_sample(const CompressedSet& c, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("kde_sample needs n >= 1");
  const KernelMixture mix(c);
  Rng rng(seed);
  return WeightedSampleSet::unweighted(mix.sample(n, rng));
}

LsResult ls_weights(const Matrix& particles, const WeightedSampleSet& s, const MomentFamily& fam) {
  const auto m = particles.cols();
  const auto rows = static_cast<Eigen::Index>(fam.size() + 1);
  if (m < 1) throw std::invalid_argument("ls_weights needs particles");
  if (rows < m) throw std::invalid_argument("ls_weights needs R+1 >= M equations");
  Matrix h(rows, m);
  Vector v(rows);
  v[0] = 1.0;
  for (Eigen::Index j = 0; j < m; ++j) h(0, j) = 1.0;
  for (std::size_t r = 0; r < fam.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r + 1);
    v[row] = mc_estimate(s, fam.function(r));
    for (Eigen::Index j = 0; j < m; ++j) h(row, j) = fam.function(r)(particles.col(j));
  }
  if (!h.allFinite()) throw NumericalError("non-finite least-squares design matrix");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(h);
  const Vector a = cod.solve(v);
  LsResult out;
  out.weights.assign(a.data(), a.data() + a.size());
  out.rank_deficient = cod.rank() < m;
  out.residual_norm = (h * a - v).norm();
  return out;
}

CompressedSet bootstrap_compress(const WeightedSampleSet& s, std::size_t m, std::uint64_t seed) {
  if (m == 0 || m > s.size()) throw std::invalid_argument("bootstrap needs 1 <= M <= N");
  Rng rng(seed);
  const auto idx = multinomial_resample(s.norm_weights(), m, rng);
  Matrix pts(static_cast<Eigen::Index>(s.dim()), static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k) pts.col(static_cast<Eigen::Index>(k)) = s.point(idx[k]);
  const double w = total_unnorm(s);
  std::optional<std::vector<double>> a_m;
  if (is_weighted(s)) {
    a_m = std::vector<double>(m, w / static_cast<double>(m) / static_cast<double>(s.size()));
  }
  return CompressedSet(std::move(pts), std::vector<double>(m, 1.0 / static_cast<double>(m)), w,
                       CompressionMode::bootstrap, std::move(a_m));
}

std::size_t payload_scalars(const CompressedSet& c, bool include_aggregated_weight) {
  const std::size_t m = c.size();
  const std::size_t d = c.dim();
  std::size_t n = 0;
  switch (c.kernel()) {
    case KernelKind::none: n = m * (d + 1); break;
    case KernelKind::full: n = m * ((d * d + 3 * d) / 2 + 1); break;
    case KernelKind::shared_diagonal: n = m * (2 * d + 1); break;
  }
  return n + (include_aggregated_weight ? 1 : 0);
}

namespace {

CompressionMode parse_mode(const std::string& s) {
  for (auto m : {CompressionMode::stochastic, CompressionMode::deterministic, CompressionMode::h_specific,
                 CompressionMode::ls, CompressionMode::bootstrap, CompressionMode::raw}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown compression mode '" + s + "'");
}

KernelKind parse_kernel(const std::string& s) {
  for (auto k : {KernelKind::none, KernelKind::full, KernelKind::shared_diagonal}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown kernel kind '" + s + "'");
}

}  // namespace

std::string compressed_to_json(const CompressedSet& c) {
  nlohmann::json j;
  auto parts = nlohmann::json::array();
  for (std::size_t m = 0; m < c.size(); ++m) {
    parts.push_back(std::vector<double>(c.particle(m).data(), c.particle(m).data() + c.dim()));
  }
  j["particles"] = parts;
  j["weights"] = std::vector<double>(c.weights().begin(), c.weights().end());
  j["W"] = c.aggregated_weight();
  j["mode_tag"] = to_string(c.mode());
  if (c.has_unnorm_weights()) j["unnorm_weights"] = std::vector<double>(c.unnorm_weights().begin(), c.unnorm_weights().end());
  if (c.has_covariances()) {
    j["kernel"] = to_string(c.kernel());
    auto covs = nlohmann::json::array();
    for (const auto& cov : c.covariances()) covs.push_back(std::vector<double>(cov.data(), cov.data() + cov.size()));
    j["covariances"] = covs;
  }
  return j.dump();
}

CompressedSet compressed_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const auto parts = j.at("particles").get<std::vector<std::vector<double>>>();
    if (parts.empty()) throw ConfigError("compressed set JSON: no particles");
    const auto d = static_cast<Eigen::Index>(parts.front().size());
    Matrix pts(d, static_cast<Eigen::Index>(parts.size()));
    for (std::size_t m = 0; m < parts.size(); ++m) {
      if (static_cast<Eigen::Index>(parts[m].size()) != d) throw ConfigError("compressed set JSON: ragged particles");
      pts.col(static_cast<Eigen::Index>(m)) = Eigen::Map<const Vector>(parts[m].data(), d);
    }
    std::optional<std::vector<double>> a_m;
    if (j.contains("unnorm_weights")) a_m = j.at("unnorm_weights").get<std::vector<double>>();
    std::vector<Matrix> covs;
    KernelKind kernel = KernelKind::none;
    if (j.contains("covariances")) {
      kernel = parse_kernel(j.at("kernel").get<std::string>());
      for (const auto& flat : j.at("covariances").get<std::vector<std::vector<double>>>()) {
        if (static_cast<Eigen::Index>(flat.size()) != d * d) throw ConfigError("compressed set JSON: bad covariance size");
        covs.push_back(Eigen::Map<const Matrix>(flat.data(), d, d));
      }
    }
    return CompressedSet(std::move(pts), j.at("weights").get<std::vector<double>>(), j.at("W").get<double>(),
                         parse_mode(j.at("mode_tag").get<std::string>()), std::move(a_m), std::move(covs), kernel);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("compressed set JSON: ") + e.what());
  }
}

}  // namespace cmc
