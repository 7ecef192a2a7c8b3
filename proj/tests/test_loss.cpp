#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "cmc/compress.hpp"
#include "cmc/error.hpp"
#include "cmc/loss.hpp"
#include "cmc/partition.hpp"
#include "cmc/random.hpp"

using namespace cmc;

namespace {

WeightedSampleSet line(std::vector<double> xs) { return WeightedSampleSet::unweighted(points_from_scalars(xs)); }

Assignment one_region(std::size_t n) {
  Assignment a;
  a.index_sets.emplace_back();
  for (std::size_t i = 0; i < n; ++i) a.index_sets[0].push_back(i);
  return a;
}

WeightedSampleSet random_weighted(std::size_t n, Rng& rng) {
  std::vector<double> xs(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = 3.0 * rng.normal();
    w[i] = std::exp(rng.normal());
  }
  return WeightedSampleSet::weighted(points_from_scalars(xs), w);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("loss_single") {
  CHECK(loss_single(2, 2) == 0.0);
  CHECK(loss_single(1, 3) == 4.0);
  const auto s = line({0.5, 1.5, 9.0});
  const Integrand h = [](const VectorRef& x) { return x[0] * x[0]; };
  const auto c = compress(s, one_region(3), HSpecificRule{h});
  CHECK(loss_single(mc_estimate(s, h), cmc_estimate(c, [](const VectorRef& x) { return x[0]; })) < 1e-20);
}

TEST_CASE("loss_family") {
  Rng rng(1);
  const auto s = random_weighted(30, rng);
  Assignment proper;
  for (std::size_t i = 0; i < 30; ++i) proper.index_sets.push_back({i});
  CHECK(loss_family(s, compress(s, proper, DeterministicRule{}), MomentFamily::powers(5)) < 1e-20);

  const auto c = compress(s, assign(build_partition(s, PartitionStrategy::uniform_grid, 3, 0), s), DeterministicRule{});
  const MomentFamily fam = MomentFamily::powers(5);
  double by_hand = 0.0;
  for (int r = 1; r <= 5; ++r) {
    const Integrand h = [r](const VectorRef& x) { return std::pow(x[0], r); };
    by_hand += loss_single(mc_estimate(s, h), cmc_estimate(c, h));
  }
  const double l5 = loss_family(s, c, fam);
  CHECK(l5 == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK(loss_family(s, c, fam.with_loss_weights({2, 2, 2, 2, 2})) == doctest::Approx(2.0 * l5).epsilon(1e-12));
}

TEST_CASE("relative loss weights reject near-zero estimates") {
  const auto s = line({-1, 1});
  CHECK_THROWS_AS(relative_loss_weights(s, MomentFamily::powers(1)), NumericalError);
  const auto w = relative_loss_weights(line({1, 3}), MomentFamily::powers(1));
  CHECK(w[0] == doctest::Approx(0.25));
}

TEST_CASE("deterministic region costs") {
  const auto affine = region_costs_deterministic(line({0, 1, 5}), Assignment{{{0, 1}, {2}}},
                                                 [](const VectorRef& x) { return 2.0 * x[0] + 1.0; });
  for (double c : affine.costs) CHECK(c == doctest::Approx(0.0));

  const auto sq = region_costs_deterministic(line({0, 2}), one_region(2), [](const VectorRef& x) { return x[0] * x[0]; });
  CHECK(sq.costs[0] == doctest::Approx(1.0));
  CHECK(sq.total == doctest::Approx(1.0));
}

TEST_CASE("deterministic total equals the squared estimate error") {
  Rng rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    const auto s = random_weighted(100, rng);
    const Assignment a = assign(build_partition(s, PartitionStrategy::random_grid, 2 + rep % 6, rng.next()), s);
    const Integrand h = [](const VectorRef& x) { return std::exp(0.2 * x[0]) + x[0] * x[0]; };
    const auto costs = region_costs_deterministic(s, a, h);
    const double direct = loss_single(mc_estimate(s, h), cmc_estimate(compress(s, a, DeterministicRule{}), h));
    double sum = 0.0;
    for (double c : costs.costs) sum += c;
    CHECK(costs.total == doctest::Approx(sum * sum).epsilon(1e-12));
    CHECK(std::abs(costs.total - direct) <= 1e-10 * std::max(1.0, direct));
  }
}

TEST_CASE("stochastic region costs") {
  const auto c = region_costs_stochastic(line({0, 2}), one_region(2), [](const VectorRef& x) { return x[0]; });
  CHECK(c.costs[0] == doctest::Approx(1.0));
  CHECK(c.total == doctest::Approx(1.0));

  const auto singles = region_costs_stochastic(line({0, 2, 7}), Assignment{{{0}, {1}, {2}}},
                                               [](const VectorRef& x) { return x[0] * x[0]; });
  for (double v : singles.costs) CHECK(v == 0.0);

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_weighted(80, rng);
    const auto r = region_costs_stochastic(s, assign(build_partition(s, PartitionStrategy::uniform_grid, 4, 0), s),
                                           [](const VectorRef& x) { return std::sin(x[0]); });
    double sum = 0.0;
    for (double v : r.costs) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(r.total == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("stochastic costs predict the replicate error") {
  Rng rng(4);
  const auto s = random_weighted(40, rng);
  const Assignment a = assign(build_partition(s, PartitionStrategy::uniform_grid, 3, 0), s);
  const Integrand h = [](const VectorRef& x) { return x[0] * x[0]; };
  const double truth = mc_estimate(s, h);
  const double predicted = region_costs_stochastic(s, a, h).total;
  const int reps = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const double e = loss_single(truth, cmc_estimate(compress(s, a, StochasticRule{derive_seed(5, r)}), h));
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - predicted) < 3.0 * se);
}

TEST_CASE("stochastic cost is the squared mass times the within-region variance") {
  Rng rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_weighted(60, rng);
    const Assignment a = assign(build_partition(s, PartitionStrategy::voronoi, 4, rng.next()), s);
    const Integrand h = [](const VectorRef& x) { return x[0] * x[0] * x[0]; };
    const auto costs = region_costs_stochastic(s, a, h);
    const auto mass = cmc_weights(s, a);
    for (std::size_t m = 0; m < a.region_count(); ++m) {
      if (a.index_sets[m].empty()) continue;
      double mean = 0.0, sq = 0.0;
      for (auto i : a.index_sets[m]) mean += s.norm_weight(i) / mass[m] * h(s.point(i));
      for (auto i : a.index_sets[m]) {
        const double d = h(s.point(i)) - mean;
        sq += s.norm_weight(i) / mass[m] * d * d;
      }
      CHECK(std::abs(costs.costs[m] - mass[m] * mass[m] * sq) <= 1e-12 * std::max(1e-300, mass[m] * mass[m] * sq) + 1e-300);
    }
  }
}

TEST_CASE("stratified estimator") {
  const boost::math::normal_distribution<double> normal;
  const ScalarFunction pdf = [&](double x) { return boost::math::pdf(normal, x); };
  const std::vector<double> edges{-kInf, 0.0, kInf};
  const std::vector<std::size_t> k{10000, 10000};
  const auto oracle = make_stratified_oracle(pdf, [](double x) { return x; }, edges, k);
  CHECK(oracle.region_masses[0] == doctest::Approx(0.5).epsilon(1e-10));
  const std::vector<StratumSampler> samplers{[](Rng& r) { return -std::abs(r.normal()); },
                                             [](Rng& r) { return std::abs(r.normal()); }};
  CHECK(std::abs(stratified_estimate(oracle, samplers, [](double x) { return x; }, 3)) < 0.03);
  CHECK(stratified_estimate(oracle, samplers, [](double) { return 1.0; }, 3) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("variance decomposition") {
  const boost::math::gamma_distribution<double> gamma(4.0, 0.5);
  const ScalarFunction pdf = [&](double x) { return x <= 0.0 ? 0.0 : boost::math::pdf(gamma, x); };
  const ScalarFunction h = [](double x) { return x; };
  const std::vector<std::size_t> k4{1, 1, 1, 1};
  const std::vector<double> edges{0.0, 1.5, 2.0, 3.0, kInf};
  const auto oracle = make_stratified_oracle(pdf, h, edges, k4);
  const auto d = variance_decomposition(oracle, 1.0);
  CHECK(std::abs(d.within + d.between - 1.0) < 1e-6);
  CHECK(d.within <= 1.0);

  const std::vector<double> whole{0.0, kInf};
  const std::vector<std::size_t> k1{1};
  const auto one = variance_decomposition(make_stratified_oracle(pdf, h, whole, k1), 1.0);
  CHECK(std::abs(one.between) < 1e-10);
  CHECK(one.within == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("region costs csv") {
  const auto c = region_costs_stochastic(line({0, 2}), one_region(2), [](const VectorRef& x) { return x[0]; });
  CHECK(region_costs_to_csv(c).find("region_index,cost") == 0);
}
