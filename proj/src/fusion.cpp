#include "cmc/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "cmc/error.hpp"

namespace cmc {

namespace {

// Cholesky of a small SPD matrix with plain loops and reused buffers; the
// blocked Eigen routines are dominated by overhead at the sizes met here.
class SmallSpd {
 public:
  explicit SmallSpd(Eigen::Index d) : d_(d), l_(d, d), linv_(d, d), y_(d) {}

  bool factor(const Matrix& a) {
    for (Eigen::Index j = 0; j < d_; ++j) {
      double diag = a(j, j);
      for (Eigen::Index k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
      if (!(diag > 0.0)) return false;
      const double ljj = std::sqrt(diag);
      l_(j, j) = ljj;
      for (Eigen::Index i = j + 1; i < d_; ++i) {
        double acc = a(i, j);
        for (Eigen::Index k = 0; k < j; ++k) acc -= l_(i, k) * l_(j, k);
        l_(i, j) = acc / ljj;
      }
    }
    return true;
  }

  double log_det() const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < d_; ++j) s += std::log(l_(j, j));
    return 2.0 * s;
  }

  template <typename Out>
  void solve(const Vector& b, Out&& x) {
    for (Eigen::Index i = 0; i < d_; ++i) {
      double acc = b[i];
      for (Eigen::Index k = 0; k < i; ++k) acc -= l_(i, k) * y_[k];
      y_[i] = acc / l_(i, i);
    }
    for (Eigen::Index i = d_ - 1; i >= 0; --i) {
      double acc = y_[i];
      for (Eigen::Index k = i + 1; k < d_; ++k) acc -= l_(k, i) * x[k];
      x[i] = acc / l_(i, i);
    }
  }

  Matrix inverse() {
    linv_.setZero();
    for (Eigen::Index j = 0; j < d_; ++j) {
      linv_(j, j) = 1.0 / l_(j, j);
      for (Eigen::Index i = j + 1; i < d_; ++i) {
        double acc = 0.0;
        for (Eigen::Index k = j; k < i; ++k) acc += l_(i, k) * linv_(k, j);
        linv_(i, j) = -acc / l_(i, i);
      }
    }
    Matrix out(d_, d_);
    for (Eigen::Index i = 0; i < d_; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (Eigen::Index k = i; k < d_; ++k) acc += linv_(k, i) * linv_(k, j);
        out(i, j) = acc;
        out(j, i) = acc;
      }
    }
    return out;
  }

 private:
  Eigen::Index d_;
  Matrix l_;
  Matrix linv_;
  Vector y_;
};

struct LocalView {
  const Matrix* points;
  std::vector<double> weights;
  std::optional<std::vector<double>> unnorm;  // scaled so they sum to W
  const std::vector<Matrix>* covariances = nullptr;
  KernelKind kernel = KernelKind::none;
};

LocalView view_of(const LocalReport& r) {
  LocalView v;
  if (const auto* s = std::get_if<WeightedSampleSet>(&r.approximation)) {
    v.points = &s->points();
    v.weights.assign(s->norm_weights().begin(), s->norm_weights().end());
    if (s->has_unnorm_weights()) v.unnorm = std::vector<double>(s->unnorm_weights().begin(), s->unnorm_weights().end());
    return v;
  }
  const auto& c = std::get<CompressedSet>(r.approximation);
  v.points = &c.particles();
  v.weights.assign(c.weights().begin(), c.weights().end());
  if (c.has_unnorm_weights()) {
    std::vector<double> a(c.unnorm_weights().begin(), c.unnorm_weights().end());
    for (double& x : a) x *= static_cast<double>(r.sample_count);
    v.unnorm = std::move(a);
  }
  if (c.has_covariances()) {
    v.covariances = &c.covariances();
    v.kernel = c.kernel();
  }
  return v;
}

struct Component {
  Matrix precision;
  Vector info;  // precision * mean
  double log_const;  // log a_hat + 0.5 log|Lambda| - 0.5 mu' Lambda mu
};

double log_sum_exp(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc);
}

}  // namespace

LocalReport LocalReport::from_samples(WeightedSampleSet s, std::string node_id) {
  double w_sum = static_cast<double>(s.size());
  std::optional<double> z;
  if (s.has_unnorm_weights()) {
    const auto w = s.unnorm_weights();
    w_sum = std::accumulate(w.begin(), w.end(), 0.0);
    z = cmc::marginal_likelihood(s);
  }
  const std::size_t n = s.size();
  return LocalReport{std::move(s), w_sum, n, z, std::move(node_id)};
}

LocalReport LocalReport::from_compressed(CompressedSet c, std::size_t n, std::string node_id) {
  if (n == 0) throw std::invalid_argument("report needs N >= 1");
  const double w_sum = c.aggregated_weight();
  std::optional<double> z;
  if (c.has_unnorm_weights()) z = w_sum / static_cast<double>(n);
  return LocalReport{std::move(c), w_sum, n, z, std::move(node_id)};
}

bool LocalReport::weighted() const {
  if (const auto* s = std::get_if<WeightedSampleSet>(&approximation)) return s->has_unnorm_weights();
  return std::get<CompressedSet>(approximation).has_unnorm_weights();
}

std::size_t LocalReport::dim() const {
  if (const auto* s = std::get_if<WeightedSampleSet>(&approximation)) return s->dim();
  return std::get<CompressedSet>(approximation).dim();
}

CompressedSet fuse_parallel(std::span<const LocalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("fusion needs at least one report");
  const std::size_t d = reports.front().dim();
  const bool weighted = reports.front().weighted();
  double total_w = 0.0;
  std::size_t total_n = 0;
  std::size_t total_particles = 0;
  bool all_kernels = true;
  bool all_shared = true;
  for (const auto& r : reports) {
    if (r.dim() != d) throw std::invalid_argument("reports differ in dimension");
    if (r.weighted() != weighted) throw std::invalid_argument("mixed weighted and unweighted reports");
    if (!(r.aggregated_weight >= 0.0)) throw std::invalid_argument("aggregated weights must be nonnegative");
    total_w += r.aggregated_weight;
    total_n += r.sample_count;
    const auto v = view_of(r);
    total_particles += static_cast<std::size_t>(v.points->cols());
    all_kernels = all_kernels && v.covariances != nullptr;
    all_shared = all_shared && v.kernel == KernelKind::shared_diagonal;
  }
  if (!(total_w > 0.0)) throw NumericalError("degenerate pool");

  Matrix pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(total_particles));
  std::vector<double> weights;
  std::vector<double> unnorm;
  std::vector<Matrix> covs;
  Eigen::Index col = 0;
  for (const auto& r : reports) {
    const auto v = view_of(r);
    const double rho = r.aggregated_weight / total_w;
    for (Eigen::Index k = 0; k < v.points->cols(); ++k) {
      pts.col(col++) = v.points->col(k);
      weights.push_back(rho * v.weights[static_cast<std::size_t>(k)]);
      if (weighted) unnorm.push_back((*v.unnorm)[static_cast<std::size_t>(k)] / static_cast<double>(total_n));
      if (all_kernels) covs.push_back((*v.covariances)[static_cast<std::size_t>(k)]);
    }
  }
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= sum;
  std::optional<std::vector<double>> a_m;
  if (weighted) a_m = std::move(unnorm);
  const KernelKind kind = all_kernels ? (all_shared ? KernelKind::shared_diagonal : KernelKind::full) : KernelKind::none;
  if (!all_kernels) covs.clear();
  return CompressedSet(std::move(pts), std::move(weights), total_w, CompressionMode::raw, std::move(a_m),
                       std::move(covs), kind);
}

std::vector<double> model_posterior(std::span<const LocalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("model posterior needs at least one report");
  std::vector<double> mass;
  for (const auto& r : reports) {
    if (!r.marginal_likelihood) throw std::invalid_argument("model posterior needs Zhat for every report");
    if (*r.marginal_likelihood < 0.0 || !std::isfinite(*r.marginal_likelihood)) {
      throw std::invalid_argument("Zhat must be finite and nonnegative");
    }
    mass.push_back(static_cast<double>(r.sample_count) * *r.marginal_likelihood);
  }
  return normalize_weights(mass);
}

std::vector<double> model_posterior_from_log(std::span<const double> log_z, std::span<const std::size_t> counts) {
  if (log_z.empty() || log_z.size() != counts.size()) throw std::invalid_argument("one count per log Zhat required");
  std::vector<double> lw;
  for (std::size_t k = 0; k < log_z.size(); ++k) {
    if (std::isnan(log_z[k]) || log_z[k] == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("log Zhat must be finite or -infinity");
    }
    lw.push_back(log_z[k] + std::log(static_cast<double>(counts[k])));
  }
  double shift = 0.0;
  return normalize_weights(exp_shift(lw, shift));
}

ProductMixture fuse_product_of_mixtures(std::span<const LocalReport> reports, std::size_t cap) {
  if (reports.empty()) throw std::invalid_argument("product fusion needs at least one report");
  const std::size_t d = reports.front().dim();
  const auto di = static_cast<Eigen::Index>(d);
  std::vector<std::vector<Component>> comps;
  std::vector<bool> shared;
  std::size_t total = 1;
  double total_w = 0.0;
  bool all_shared_kind = true;
  for (const auto& r : reports) {
    const auto* c = std::get_if<CompressedSet>(&r.approximation);
    if (c == nullptr || !c->has_covariances()) throw std::invalid_argument("product fusion needs kernel reports");
    if (c->dim() != d) throw std::invalid_argument("reports differ in dimension");
    if (c->size() > cap / total) throw std::invalid_argument("enumeration too large");
    total *= c->size();
    total_w += r.aggregated_weight;
    all_shared_kind = all_shared_kind && c->kernel() == KernelKind::shared_diagonal;
    std::vector<Component> list;
    bool same = true;
    for (std::size_t m = 0; m < c->size(); ++m) {
      Eigen::LLT<Matrix> llt(c->covariance(m));
      if (llt.info() != Eigen::Success) throw NumericalError("kernel covariance not positive definite");
      const Matrix precision = llt.solve(Matrix::Identity(di, di));
      const Vector mu = c->particle(m);
      const Vector info = precision * mu;
      const double log_det_precision = -2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      const double w = c->weight(m);
      const double log_w = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
      list.push_back({precision, info, log_w + 0.5 * log_det_precision - 0.5 * mu.dot(info)});
      same = same && c->covariance(m) == c->covariance(0);
    }
    comps.push_back(std::move(list));
    shared.push_back(same);
  }
  const std::size_t levels = comps.size();
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const double tail = -0.5 * static_cast<double>(levels - 1) * static_cast<double>(d) * log_2pi;
  const bool fast = std::all_of(shared.begin(), shared.end(), [](bool b) { return b; });

  Matrix means(di, static_cast<Eigen::Index>(total));
  std::vector<double> log_w;
  log_w.reserve(total);
  std::vector<Matrix> covs;
  if (!fast) covs.reserve(total);
  std::size_t rejected = 0;
  std::size_t kept = 0;

  // Depth-first walk over component tuples, sharing prefix sums.
  std::vector<std::size_t> idx(levels, 0);
  std::vector<Matrix> lam_prefix(levels + 1, Matrix::Zero(di, di));
  std::vector<Vector> eta_prefix(levels + 1, Vector::Zero(di));
  std::vector<double> c_prefix(levels + 1, 0.0);

  SmallSpd leaf(di);
  Eigen::LLT<Matrix> shared_llt;
  Matrix shared_cov;
  double shared_log_det = 0.0;
  if (fast) {
    Matrix lam = Matrix::Zero(di, di);
    for (const auto& list : comps) lam += list.front().precision;
    shared_llt.compute(lam);
    if (shared_llt.info() != Eigen::Success) throw NumericalError("precision sum not positive definite");
    shared_cov = shared_llt.solve(Matrix::Identity(di, di));
    shared_log_det = 2.0 * Matrix(shared_llt.matrixL()).diagonal().array().log().sum();
  }

  std::size_t depth = 0;
  for (;;) {
    if (depth == levels) {
      const Vector& eta = eta_prefix[levels];
      if (fast) {
        const Vector mu = shared_llt.solve(eta);
        means.col(static_cast<Eigen::Index>(kept)) = mu;
        log_w.push_back(c_prefix[levels] + 0.5 * eta.dot(mu) - 0.5 * shared_log_det + tail);
        ++kept;
      } else {
        if (!leaf.factor(lam_prefix[levels])) {
          ++rejected;
        } else {
          auto mu = means.col(static_cast<Eigen::Index>(kept));
          leaf.solve(eta, mu);
          log_w.push_back(c_prefix[levels] + 0.5 * eta.dot(mu) - 0.5 * leaf.log_det() + tail);
          covs.push_back(leaf.inverse());
          ++kept;
        }
      }
      // Advance to the next tuple.
      std::size_t level = levels;
      while (level > 0) {
        --level;
        if (++idx[level] < comps[level].size()) break;
        idx[level] = 0;
        if (level == 0) {
          level = levels + 1;
          break;
        }
      }
      if (level == levels + 1) break;
      depth = level;
    }
    const auto& comp = comps[depth][idx[depth]];
    if (!fast) lam_prefix[depth + 1] = lam_prefix[depth] + comp.precision;
    eta_prefix[depth + 1] = eta_prefix[depth] + comp.info;
    c_prefix[depth + 1] = c_prefix[depth] + comp.log_const;
    ++depth;
  }

  if (kept == 0) throw NumericalError("degenerate pool");
  means.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(kept));
  const double log_mass = log_sum_exp(log_w);
  if (!std::isfinite(log_mass)) throw NumericalError("degenerate pool");
  std::vector<double> weights(kept);
  for (std::size_t k = 0; k < kept; ++k) weights[k] = std::exp(log_w[k] - log_mass);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= sum;
  KernelKind kind = KernelKind::full;
  if (fast) {
    covs.assign(kept, shared_cov);
    if (all_shared_kind) kind = KernelKind::shared_diagonal;
  }
  return {CompressedSet(std::move(means), std::move(weights), total_w, CompressionMode::raw, std::nullopt,
                        std::move(covs), kind),
          log_mass, rejected};
}

std::size_t payload_scalars(const LocalReport& report) {
  if (const auto* s = std::get_if<WeightedSampleSet>(&report.approximation)) {
    return s->size() * (s->dim() + 1) + (report.weighted() ? 1 : 0);
  }
  return payload_scalars(std::get<CompressedSet>(report.approximation), report.weighted());
}

std::string report_to_json(const LocalReport& report) {
  nlohmann::json j;
  if (const auto* s = std::get_if<WeightedSampleSet>(&report.approximation)) {
    j["samples_csv"] = write_samples_csv(*s);
  } else {
    j = nlohmann::json::parse(compressed_to_json(std::get<CompressedSet>(report.approximation)));
  }
  j["node_id"] = report.node_id;
  j["N"] = report.sample_count;
  j["report_W"] = report.aggregated_weight;
  if (report.marginal_likelihood) j["Zhat"] = *report.marginal_likelihood;
  return j.dump();
}

LocalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::optional<double> z;
    if (j.contains("Zhat")) z = j.at("Zhat").get<double>();
    auto approx = j.contains("samples_csv")
                      ? std::variant<WeightedSampleSet, CompressedSet>(read_samples_csv(j.at("samples_csv").get<std::string>()))
                      : std::variant<WeightedSampleSet, CompressedSet>(compressed_from_json(text));
    return LocalReport{std::move(approx), j.at("report_W").get<double>(), j.at("N").get<std::size_t>(), z,
                       j.at("node_id").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report JSON: ") + e.what());
  }
}

}  // namespace cmc
