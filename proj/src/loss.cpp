#include "cmc/loss.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cmc/error.hpp"

namespace cmc {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw NumericalError("non-finite integrand");
  return v;
}

double integrate(const ScalarFunction& f, double lo, double hi, double tolerance) {
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, tolerance, &error);
  if (!std::isfinite(value)) throw NumericalError("integration failure");
  return value;
}

}  // namespace

double loss_single(double i_full, double i_compressed) {
  const double e = i_full - i_compressed;
  return e * e;
}

double loss_family(const WeightedSampleSet& s, const CompressedSet& c, const MomentFamily& fam) {
  if (c.mode() == CompressionMode::h_specific) {
    if (fam.size() != 1) throw std::invalid_argument("h-specific sets only support a single-function family");
    const double approx = cmc_estimate(c, [](const VectorRef& x) { return x[0]; });
    return fam.loss_weight(0) * loss_single(mc_estimate(s, fam.function(0)), approx);
  }
  if (c.dim() != s.dim()) throw std::invalid_argument("compressed set and samples differ in dimension");
  double total = 0.0;
  for (std::size_t r = 0; r < fam.size(); ++r) {
    total += fam.loss_weight(r) * loss_single(mc_estimate(s, fam.function(r)), cmc_estimate(c, fam.function(r)));
  }
  return total;
}

std::vector<double> relative_loss_weights(const WeightedSampleSet& s, const MomentFamily& fam,
                                          double min_abs_estimate) {
  std::vector<double> xi;
  for (std::size_t r = 0; r < fam.size(); ++r) {
    const double est = mc_estimate(s, fam.function(r));
    if (!(std::abs(est) >= min_abs_estimate)) {
      throw NumericalError("relative loss weight undefined for a near-zero estimate");
    }
    xi.push_back(1.0 / (est * est));
  }
  return xi;
}

RegionCosts region_costs_deterministic(const WeightedSampleSet& s, const Assignment& a, const Integrand& h) {
  RegionCosts out;
  out.mode = CostMode::deterministic;
  out.costs.assign(a.region_count(), 0.0);
  const auto masses = cmc_weights(s, a);
  double sum = 0.0;
  for (std::size_t m = 0; m < a.region_count(); ++m) {
    if (!(masses[m] > 0.0)) continue;
    const auto& j = a.index_sets[m];
    const auto ww = within_region_weights(s, a, m);
    Vector sm = Vector::Zero(static_cast<Eigen::Index>(s.dim()));
    for (std::size_t k = 0; k < j.size(); ++k) sm += ww[k] * s.point(j[k]);
    const double hs = checked(h(sm));
    double c = 0.0;
    for (auto i : j) c += s.norm_weight(i) * (checked(h(s.point(i))) - hs);
    out.costs[m] = c;
    sum += c;
  }
  out.total = sum * sum;
  return out;
}

RegionCosts region_costs_stochastic(const WeightedSampleSet& s, const Assignment& a, const Integrand& h) {
  RegionCosts out;
  out.mode = CostMode::stochastic;
  out.costs.assign(a.region_count(), 0.0);
  const auto masses = cmc_weights(s, a);
  for (std::size_t m = 0; m < a.region_count(); ++m) {
    if (!(masses[m] > 0.0)) continue;
    const auto& j = a.index_sets[m];
    const auto ww = within_region_weights(s, a, m);
    std::vector<double> hv;
    hv.reserve(j.size());
    double mu = 0.0;
    for (std::size_t k = 0; k < j.size(); ++k) {
      hv.push_back(checked(h(s.point(j[k]))));
      mu += ww[k] * hv.back();
    }
    double var = 0.0;
    for (std::size_t k = 0; k < j.size(); ++k) var += ww[k] * (hv[k] - mu) * (hv[k] - mu);
    out.costs[m] = masses[m] * masses[m] * var;
  }
  out.total = std::accumulate(out.costs.begin(), out.costs.end(), 0.0);
  return out;
}

std::string region_costs_to_csv(const RegionCosts& c) {
  std::ostringstream os;
  os << "region_index,cost\n";
  for (std::size_t m = 0; m < c.costs.size(); ++m) os << m << ',' << format_double(c.costs[m]) << '\n';
  return os.str();
}

StratifiedOracle make_stratified_oracle(const ScalarFunction& pdf, const ScalarFunction& h,
                                        std::span<const double> edges, std::span<const std::size_t> samples_per_region,
                                        double tolerance) {
  if (edges.size() < 2) throw std::invalid_argument("stratified oracle needs at least one interval");
  const std::size_t regions = edges.size() - 1;
  if (samples_per_region.size() != regions) throw std::invalid_argument("one sample count per stratum required");
  StratifiedOracle o;
  o.samples_per_region.assign(samples_per_region.begin(), samples_per_region.end());
  for (std::size_t m = 0; m < regions; ++m) {
    const double lo = edges[m];
    const double hi = edges[m + 1];
    if (!(lo < hi)) throw std::invalid_argument("stratum edges must be increasing");
    const double mass = integrate(pdf, lo, hi, tolerance);
    if (!(mass > 0.0)) throw NumericalError("integration failure");
    const double mean = integrate([&](double x) { return h(x) * pdf(x); }, lo, hi, tolerance) / mass;
    const double var =
        integrate([&](double x) { const double e = h(x) - mean; return e * e * pdf(x); }, lo, hi, tolerance) / mass;
    if (var < -tolerance) throw NumericalError("integration failure");
    o.region_masses.push_back(mass);
    o.region_means.push_back(mean);
    o.region_variances.push_back(std::max(var, 0.0));
  }
  return o;
}

double stratified_estimate(const StratifiedOracle& oracle, std::span<const StratumSampler> samplers,
                           const ScalarFunction& h, std::uint64_t seed) {
  const std::size_t regions = oracle.region_masses.size();
  if (samplers.size() != regions) throw std::invalid_argument("one sampler per stratum required");
  double total = 0.0;
  for (std::size_t m = 0; m < regions; ++m) {
    const std::size_t k = oracle.samples_per_region[m];
    if (k == 0) throw std::invalid_argument("every stratum needs K_m >= 1 samples");
    Rng rng(derive_seed(seed, m));
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += h(samplers[m](rng));
    total += oracle.region_masses[m] * acc / static_cast<double>(k);
  }
  return total;
}

double stratified_variance(const StratifiedOracle& oracle) {
  double v = 0.0;
  for (std::size_t m = 0; m < oracle.region_masses.size(); ++m) {
    const std::size_t k = oracle.samples_per_region[m];
    if (k == 0) throw std::invalid_argument("every stratum needs K_m >= 1 samples");
    const double a = oracle.region_masses[m];
    v += a * a * oracle.region_variances[m] / static_cast<double>(k);
  }
  return v;
}

VarianceDecomposition variance_decomposition(const StratifiedOracle& oracle, double total_variance,
                                             double tolerance) {
  double mean = 0.0;
  for (std::size_t m = 0; m < oracle.region_masses.size(); ++m) mean += oracle.region_masses[m] * oracle.region_means[m];
  VarianceDecomposition d;
  for (std::size_t m = 0; m < oracle.region_masses.size(); ++m) {
    if (oracle.region_variances[m] < -tolerance) throw NumericalError("integration failure");
    const double a = oracle.region_masses[m];
    const double e = oracle.region_means[m] - mean;
    d.within += a * oracle.region_variances[m];
    d.between += a * e * e;
  }
  if (d.within > total_variance + tolerance) throw NumericalError("integration failure");
  return d;
}

}  // namespace cmc
