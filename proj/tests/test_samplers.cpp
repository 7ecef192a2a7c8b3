#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "cmc/error.hpp"
#include "cmc/samplers.hpp"
#include "cmc/targets.hpp"

using namespace cmc;

namespace {

double std_normal_log(const VectorRef& x) { return -0.5 * x.squaredNorm() - 0.5 * x.size() * std::log(2.0 * std::numbers::pi); }

ChainConfig chain(std::size_t length, double var, Vector start, std::uint64_t seed) {
  ChainConfig c;
  c.length = length;
  c.proposal_cov = Matrix::Identity(start.size(), start.size()) * var;
  c.initial = std::move(start);
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("MH on a flat target accepts every move") {
  const auto r = mh_random_walk([](const VectorRef&) { return 0.0; }, chain(200, 1.0, Vector::Zero(2), 1));
  CHECK(r.acceptance_rate == 1.0);
}

TEST_CASE("MH with T = 1 returns the initial state") {
  Vector start(1);
  start << 0.7;
  const auto r = mh_random_walk(std_normal_log, chain(1, 1.0, start, 1));
  CHECK(r.states.cols() == 1);
  CHECK(r.states(0, 0) == 0.7);
}

TEST_CASE("MH on a standard normal") {
  const auto r = mh_random_walk(std_normal_log, chain(100000, 1.0, Vector::Zero(1), 2));
  CHECK(std::abs(r.states.row(0).mean()) < 0.05);
  // Long-run acceptance for N(0,1) with unit proposal variance is (2/pi) atan(2).
  CHECK(r.acceptance_rate == doctest::Approx(2.0 / std::numbers::pi * std::atan(2.0)).epsilon(0.01));
}

TEST_CASE("MH rejects a start outside the support") {
  const LogDensity boxed = [](const VectorRef& x) {
    return std::abs(x[0]) < 1.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  Vector start(1);
  start << 5.0;
  CHECK_THROWS_AS(mh_random_walk(boxed, chain(10, 1.0, start, 1)), std::invalid_argument);
}

TEST_CASE("MH is deterministic given the seed") {
  const auto a = mh_random_walk(std_normal_log, chain(500, 0.5, Vector::Zero(2), 9));
  const auto b = mh_random_walk(std_normal_log, chain(500, 0.5, Vector::Zero(2), 9));
  CHECK(a.states == b.states);
}

TEST_CASE("PMC with the target as proposal gives near-constant weights") {
  // Target N(0, 4 I); every proposal is N(0, 4 I).
  const LogDensity target = [](const VectorRef& x) {
    return -0.5 * x.squaredNorm() / 4.0 - std::log(2.0 * std::numbers::pi * 4.0);
  };
  PmcConfig cfg;
  cfg.samples_per_iter = 200;
  cfg.iterations = 1;
  cfg.initial_means = Matrix::Zero(2, 1);
  cfg.proposal_sd = 2.0;
  cfg.seed = 3;
  const auto r = pmc(target, cfg);
  for (double lw : r.log_weights) CHECK(std::abs(lw) < 1e-12);
}

TEST_CASE("PMC improves the posterior-mean estimate over its first iteration") {
  Vector mu(2);
  mu << 3.0, -2.0;
  const LogDensity target = [&](const VectorRef& x) { return -0.5 * (x - mu).squaredNorm() / 0.25; };
  double err_first = 0.0, err_last = 0.0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    PmcConfig cfg;
    cfg.samples_per_iter = 100;
    cfg.proposal_sd = 2.0;
    cfg.seed = derive_seed(77, rep);
    cfg.initial_means = Matrix::Zero(2, 100);
    Rng init(derive_seed(78, rep));
    for (Eigen::Index i = 0; i < 100; ++i) {
      cfg.initial_means(0, i) = init.uniform(-10, 10);
      cfg.initial_means(1, i) = init.uniform(-10, 10);
    }
    auto est = [&](std::size_t iters) {
      cfg.iterations = iters;
      const auto r = pmc(target, cfg);
      const auto s = r.to_sample_set(r.max_log_weight());
      Vector m = Vector::Zero(2);
      for (std::size_t i = 0; i < s.size(); ++i) m += s.norm_weight(i) * s.point(i);
      return (m - mu).squaredNorm();
    };
    err_first += est(1);
    err_last += est(20);
  }
  CHECK(err_last < err_first);
}

TEST_CASE("PMC on the sensor network stays in the prior box") {
  Vector truth(2);
  truth << 2.5, 2.5;
  const auto target = SensorNetworkTarget::standard(truth, 5);
  PmcConfig cfg;
  cfg.samples_per_iter = 500;
  cfg.iterations = 20;
  cfg.seed = 6;
  Rng init(7);
  cfg.initial_means = Matrix(2, 500);
  for (Eigen::Index i = 0; i < 500; ++i) {
    cfg.initial_means(0, i) = init.uniform(-30, 30);
    cfg.initial_means(1, i) = init.uniform(-30, 30);
  }
  const auto r = pmc([&](const VectorRef& x) { return target.log_target(x); }, cfg);
  const auto s = r.to_sample_set(r.max_log_weight());
  Vector m = Vector::Zero(2);
  for (std::size_t i = 0; i < s.size(); ++i) m += s.norm_weight(i) * s.point(i);
  CHECK(std::abs(m[0]) <= 30.0);
  CHECK(std::abs(m[1]) <= 30.0);
}

TEST_CASE("PMC reports total weight degeneracy") {
  PmcConfig cfg;
  cfg.samples_per_iter = 10;
  cfg.iterations = 2;
  cfg.initial_means = Matrix::Zero(1, 1);
  CHECK_THROWS_WITH_AS(pmc([](const VectorRef&) { return -std::numeric_limits<double>::infinity(); }, cfg),
                       "weight degeneracy", NumericalError);
}

TEST_CASE("LAIS weights") {
  Matrix x(1, 1), mu(1, 1);
  x << 0.3;
  mu << -0.2;
  const Matrix c = Matrix::Identity(1, 1) * 0.5;
  const auto w = lais_log_weights(x, mu, c, std_normal_log);
  const double q = -0.5 * 0.25 / 0.5 - 0.5 * std::log(2.0 * std::numbers::pi * 0.5);
  CHECK(w[0] == doctest::Approx(std_normal_log(x.col(0)) - q));

  // Target equal to the temporal mixture itself: all weights equal.
  Matrix means(1, 3);
  means << -1.0, 0.0, 2.0;
  const LogDensity mix = [&](const VectorRef& y) {
    double p = 0.0;
    for (Eigen::Index k = 0; k < 3; ++k) {
      const double d = y[0] - means(0, k);
      p += std::exp(-0.5 * d * d) / std::sqrt(2.0 * std::numbers::pi) / 3.0;
    }
    return std::log(p);
  };
  Matrix s4(1, 3);
  s4 << -3.0, 0.1, 4.0;
  for (double v : lais_log_weights(s4, means, Matrix::Identity(1, 1), mix)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("LAIS recovers the normalizing constant of a normalized target") {
  Rng rng(40);
  double sum = 0.0, sum2 = 0.0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const auto chain_r = mh_random_walk(std_normal_log, chain(200, 1.0, Vector::Zero(1), derive_seed(41, r)));
    const Matrix& mu = chain_r.states;
    Matrix x(1, mu.cols());
    for (Eigen::Index t = 0; t < mu.cols(); ++t) x(0, t) = mu(0, t) + rng.normal();
    const auto lw = lais_log_weights(x, mu, Matrix::Identity(1, 1), std_normal_log);
    double z = 0.0;
    for (double v : lw) z += std::exp(v);
    z /= static_cast<double>(lw.size());
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - 1.0) < 3.0 * se + 1e-3);
}

TEST_CASE("CLAIS evaluation counts and weights") {
  ClaisConfig cfg;
  cfg.chain = chain(2000, 1.0, Vector::Zero(2), 12);
  cfg.regions = 8;
  const auto r = clais(std_normal_log, cfg);
  CHECK(r.target_evals == 2000);
  CHECK(r.kernel_evals == 2000 * r.mixture_components);
  CHECK(r.mixture_components <= 8);
  for (double v : r.samples.log_weights) CHECK((std::isfinite(v) || v == -std::numeric_limits<double>::infinity()));
  CHECK(std::abs(std::exp(r.log_Z) - 1.0) < 0.2);
}

TEST_CASE("CLAIS evidence is unbiased for a normalized target") {
  const int reps = 1000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < reps; ++i) {
    ClaisConfig cfg;
    cfg.chain = chain(300, 1.0, Vector::Zero(1), derive_seed(50, i));
    cfg.regions = 5;
    cfg.delta = 1e-3;
    const double z = std::exp(clais(std_normal_log, cfg).log_Z);
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - 1.0) < 4.0 * se);
}

TEST_CASE("CLAIS can compress the drawn samples instead of the means") {
  ClaisConfig cfg;
  cfg.chain = chain(1000, 1.0, Vector::Zero(1), 13);
  cfg.regions = 6;
  cfg.compress_set = ClaisCompressionSet::samples;
  const auto r = clais(std_normal_log, cfg);
  CHECK(std::abs(std::exp(r.log_Z) - 1.0) < 0.2);
}

TEST_CASE("radial velocity model") {
  std::vector<double> times{0.0, 10.0, 20.0};
  Vector x(5);
  x << 1.0, 2.0, 40.0, 0.5, 0.0;
  const auto v = RadialVelocityModel::velocity(x, 1, times);
  CHECK(v[0] == doctest::Approx(1.0 + 2.0 * (1.0 + 0.5)));
  CHECK(v[1] == doctest::Approx(1.0 + 2.0 * (std::cos(std::numbers::pi / 2.0) + 0.5)));
  const RadialVelocityModel m(1, times, v);
  CHECK(m.dim() == 5);
  CHECK(std::isfinite(m.log_target(x)));
  Vector out = x;
  out[3] = 1.5;
  CHECK(m.log_target(out) == -std::numeric_limits<double>::infinity());
  Rng rng(1);
  CHECK(std::isfinite(m.log_prior(m.sample_prior(rng))));
}
